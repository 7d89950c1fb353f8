//! The game document format.
//!
//! A game is a TOML document:
//!
//! ```toml
//! name = "coordination"          # optional
//! players = 2
//! actions = [2, 2]
//! payoffs = [
//!     [1.0, 0.5, 0.5, 1.0],      # player 0
//!     [1.0, 0.5, 0.5, 1.0],      # player 1
//! ]
//! ```
//!
//! Each payoff list is in canonical profile order: player 0 most
//! significant, the last player varying fastest.

use std::path::Path;

use lastab_core::game::Game;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub players: usize,
    pub actions: Vec<usize>,
    pub payoffs: Vec<Vec<f64>>,
}

impl GameDoc {
    pub fn from_game(game: &Game) -> Self {
        Self {
            name: game.name().map(str::to_owned),
            players: game.players(),
            actions: game.actions().to_vec(),
            payoffs: (0..game.players())
                .map(|i| game.payoff_tensor(i).to_vec())
                .collect(),
        }
    }

    /// Validates the document into a [`Game`].
    pub fn into_game(self) -> Result<Game> {
        if self.players != self.actions.len() {
            return Err(lastab_core::Error::DimensionMismatch {
                field: "actions".into(),
                expected: self.players,
                found: self.actions.len(),
            }
            .into());
        }
        let game = Game::new(self.actions, self.payoffs)?;
        Ok(match self.name {
            Some(n) => game.with_name(n),
            None => game,
        })
    }
}

fn parse_doc(context: &str, text: &str) -> Result<GameDoc> {
    toml::from_str(text).map_err(|e| Error::malformed(context, e.message()))
}

/// Parses and validates a game document.
pub fn load_game(text: &str) -> Result<Game> {
    parse_doc("game", text)?.into_game()
}

pub fn load_game_file(path: &Path) -> Result<Game> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_doc(&path.display().to_string(), &text)?.into_game()
}

pub fn game_to_toml(game: &Game) -> String {
    toml::to_string(&GameDoc::from_game(game)).expect("game documents always serialize")
}

#[cfg(test)]
mod tests {
    use super::*;
    use lastab_core::game::{builtin_game, BuiltinParams};

    #[test]
    fn constant_document() {
        let g = load_game("players = 2\nactions = [2, 2]\npayoffs = [[1, 1, 1, 1], [1.0, 1.0, 1.0, 1.0]]\n").unwrap();
        assert_eq!(g.num_profiles(), 4);
        assert!(g.payoff_tensor(0).iter().all(|&u| u == 1.0));
        assert_eq!(g.name(), None);
    }

    #[test]
    fn zero_payoff_names_index() {
        let err = load_game("players = 2\nactions = [2, 2]\npayoffs = [[1, 1, 1, 1], [1, 0.0, 1, 1]]\n").unwrap_err();
        assert!(matches!(err, Error::Core(lastab_core::Error::NonPositivePayoff { player: 1, index: 1, .. })));
        assert!(err.to_string().contains("payoffs[1][1]"));
        assert!(err.is_validation());
    }

    #[test]
    fn short_tensor() {
        let err = load_game("players = 2\nactions = [2, 3]\npayoffs = [[1, 1, 1, 1, 1], [1, 1, 1, 1, 1, 1]]\n").unwrap_err();
        assert!(err.to_string().starts_with("payoffs[0]: expected 6"), "{err}");
    }

    #[test]
    fn malformed_documents_name_the_field() {
        let err = load_game("players = 2\nactions = [2, 2]\n").unwrap_err();
        assert!(matches!(err, Error::MalformedDocument { .. }));
        assert!(err.to_string().contains("payoffs"), "{err}");
        let err = load_game("players = \"two\"\nactions = [2, 2]\npayoffs = []\n").unwrap_err();
        assert!(err.to_string().contains("players") || err.to_string().contains("usize"), "{err}");
        let err = load_game("players = 2\nactions = [2, 2]\npayoffs = [[1,1,1,1],[1,1,1,1]]\ncolour = 1\n").unwrap_err();
        assert!(err.to_string().contains("colour"), "{err}");
        let err = load_game("players = 3\nactions = [2, 2]\npayoffs = [[1,1,1,1],[1,1,1,1]]\n").unwrap_err();
        assert!(err.to_string().starts_with("actions"), "{err}");
    }

    #[test]
    fn document_roundtrip() {
        for name in ["coordination", "shifted_rps", "random_positive"] {
            let g = builtin_game(name, &BuiltinParams::new()).unwrap();
            assert_eq!(load_game(&game_to_toml(&g)).unwrap(), g);
        }
    }
}
