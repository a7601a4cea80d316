use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Position {
    pub x: u32,
    pub y: u32,
}

impl Position {
    pub const fn new(x: u32, y: u32) -> Self {
        Self { x, y }
    }

    pub fn manhattan(self, other: Position) -> u32 {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y)
    }

    pub fn in_grid(self, grid_size: u32) -> bool {
        self.x < grid_size && self.y < grid_size
    }
}

impl std::fmt::Display for Position {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{},{}]", self.x, self.y)
    }
}

/// Step from `from` toward `to` spending at most `max_dist` Manhattan units,
/// exhausting the x axis before touching y.
pub fn move_toward(from: Position, to: Position, max_dist: u32) -> Position {
    let dx = from.x.abs_diff(to.x).min(max_dist);
    let x = if to.x >= from.x { from.x + dx } else { from.x - dx };
    let budget = max_dist - dx;
    let dy = from.y.abs_diff(to.y).min(budget);
    let y = if to.y >= from.y { from.y + dy } else { from.y - dy };
    Position { x, y }
}
