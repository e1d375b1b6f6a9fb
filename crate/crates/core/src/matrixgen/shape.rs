use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Disc,
    Square,
    Triangle,
    Bar,
    Cross,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 5] = [
        ShapeKind::Disc,
        ShapeKind::Square,
        ShapeKind::Triangle,
        ShapeKind::Bar,
        ShapeKind::Cross,
    ];

    /// Kinds whose four allowed rotations all render differently.
    pub fn rotation_distinct(self) -> bool {
        matches!(self, ShapeKind::Triangle | ShapeKind::Bar)
    }
}

/// One figure (possibly repeated `count` times) inside a cell.
///
/// `size_pct` is the figure's extent as a percentage of the cell width and
/// `position` is a slot of the 3×3 sub-lattice of the cell (row-major).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ShapeSpec {
    pub kind: ShapeKind,
    pub size_pct: u8,
    pub intensity: u8,
    pub count: u8,
    pub rotation: u16,
    pub position: u8,
}

pub const SIZE_RANGE: (i32, i32) = (10, 90);
pub const COUNT_RANGE: (i32, i32) = (1, 4);
pub const ROTATIONS: [u16; 4] = [0, 45, 90, 135];

impl ShapeSpec {
    pub fn is_valid(&self) -> bool {
        (SIZE_RANGE.0..=SIZE_RANGE.1).contains(&(self.size_pct as i32))
            && (COUNT_RANGE.0..=COUNT_RANGE.1).contains(&(self.count as i32))
            && ROTATIONS.contains(&self.rotation)
            && self.position < 9
    }
}

/// Attributes a rule can govern.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    Size,
    Intensity,
    Count,
    Rotation,
    Overlay,
}

impl Attribute {
    pub const SCALAR: [Attribute; 4] = [
        Attribute::Size,
        Attribute::Intensity,
        Attribute::Count,
        Attribute::Rotation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Attribute::Size => "size",
            Attribute::Intensity => "intensity",
            Attribute::Count => "count",
            Attribute::Rotation => "rotation",
            Attribute::Overlay => "overlay",
        }
    }

    /// Smallest meaningful increment of the attribute.
    pub fn unit(self) -> i32 {
        match self {
            Attribute::Size => 10,
            Attribute::Intensity => 50,
            Attribute::Count => 1,
            Attribute::Rotation => 45,
            Attribute::Overlay => 1,
        }
    }

    pub fn get(self, s: &ShapeSpec) -> i32 {
        match self {
            Attribute::Size => s.size_pct as i32,
            Attribute::Intensity => s.intensity as i32,
            Attribute::Count => s.count as i32,
            Attribute::Rotation => s.rotation as i32,
            Attribute::Overlay => s.position as i32,
        }
    }

    /// Writes `v` if it lies in the attribute's range; returns false otherwise
    /// and leaves the shape untouched.
    pub fn set(self, s: &mut ShapeSpec, v: i32) -> bool {
        match self {
            Attribute::Size if (SIZE_RANGE.0..=SIZE_RANGE.1).contains(&v) => s.size_pct = v as u8,
            Attribute::Intensity if (0..=255).contains(&v) => s.intensity = v as u8,
            Attribute::Count if (COUNT_RANGE.0..=COUNT_RANGE.1).contains(&v) => s.count = v as u8,
            Attribute::Rotation if ROTATIONS.contains(&(v.max(0) as u16)) && v >= 0 => {
                s.rotation = v as u16
            }
            Attribute::Overlay if (0..9).contains(&v) => s.position = v as u8,
            _ => return false,
        }
        true
    }
}

/// Set of occupied slots (0..9) within a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct SlotSet(u16);

impl SlotSet {
    pub fn from_slots(slots: impl IntoIterator<Item = u8>) -> Self {
        SlotSet(slots.into_iter().fold(0, |acc, s| acc | (1 << s)))
    }

    pub fn bits(self) -> u16 {
        self.0
    }

    pub fn from_bits(bits: u16) -> Self {
        SlotSet(bits & 0x1ff)
    }

    pub fn contains(self, slot: u8) -> bool {
        self.0 & (1 << slot) != 0
    }

    pub fn len(self) -> u32 {
        self.0.count_ones()
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn union(self, other: SlotSet) -> SlotSet {
        SlotSet(self.0 | other.0)
    }

    pub fn difference(self, other: SlotSet) -> SlotSet {
        SlotSet(self.0 & !other.0)
    }

    pub fn iter(self) -> impl Iterator<Item = u8> {
        (0u8..9).filter(move |&s| self.contains(s))
    }
}

impl Serialize for SlotSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for SlotSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let slots = Vec::<u8>::deserialize(deserializer)?;
        if let Some(bad) = slots.iter().find(|&&s| s >= 9) {
            return Err(serde::de::Error::custom(format!("slot {bad} out of range")));
        }
        Ok(SlotSet::from_slots(slots))
    }
}
