//! Semantic label set shared by every grid and Gaussian.

/// Number of semantic channels, including the empty class.
pub const NUM_CLASSES: usize = 12;

/// Label used for free space.
pub const EMPTY: u8 = 0;

pub const CEILING: u8 = 1;
pub const FLOOR: u8 = 2;
pub const WALL: u8 = 3;
pub const WINDOW: u8 = 4;
pub const CHAIR: u8 = 5;
pub const BED: u8 = 6;
pub const SOFA: u8 = 7;
pub const TABLE: u8 = 8;
pub const TVS: u8 = 9;
pub const FURNITURE: u8 = 10;
pub const OBJECTS: u8 = 11;

pub const CLASS_NAMES: [&str; NUM_CLASSES] = [
    "empty",
    "ceiling",
    "floor",
    "wall",
    "window",
    "chair",
    "bed",
    "sofa",
    "table",
    "tvs",
    "furniture",
    "objects",
];

pub fn class_name(label: u8) -> &'static str {
    CLASS_NAMES.get(label as usize).copied().unwrap_or("invalid")
}
