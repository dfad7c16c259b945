//! The fixed 29-class part color palette.
//!
//! Class 0 is the background; classes 1..=27 are human body parts in the
//! order used by part-level human segmentation models; class 28 is the
//! manipulated object. Eleven entries carry canonical named colors
//! (background black, object light gray, face/neck baby blue, hair hot
//! pink, torso green, left hand magenta, right hand red, left lower arm
//! teal, right lower arm neon green, left upper arm orange, right upper
//! arm dark blue); the remaining classes use the fixed RGBs below. The
//! full table is normative for this repository and is reproduced in the
//! README.

/// One palette entry: class id, human-readable part name, RGB color.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PaletteEntry {
    pub id: u8,
    pub name: &'static str,
    pub rgb: [u8; 3],
}

/// Number of classes in the palette.
pub const NUM_CLASSES: usize = 29;

/// Well-known class ids used by the synthetic world.
pub const BACKGROUND: u8 = 0;
pub const FACE_NECK: u8 = 2;
pub const HAIR: u8 = 3;
pub const LEFT_HAND: u8 = 5;
pub const LEFT_LOWER_ARM: u8 = 6;
pub const LEFT_UPPER_ARM: u8 = 10;
pub const RIGHT_HAND: u8 = 14;
pub const RIGHT_LOWER_ARM: u8 = 15;
pub const RIGHT_UPPER_ARM: u8 = 19;
pub const TORSO: u8 = 21;
pub const OBJECT: u8 = 28;

const TABLE: [(&str, [u8; 3]); NUM_CLASSES] = [
    ("background", [0, 0, 0]),
    ("apparel", [153, 50, 204]),
    ("face/neck", [137, 207, 240]),
    ("hair", [255, 105, 180]),
    ("left foot", [139, 69, 19]),
    ("left hand", [255, 0, 255]),
    ("left lower arm", [0, 128, 128]),
    ("left lower leg", [70, 130, 180]),
    ("left shoe", [105, 105, 105]),
    ("left sock", [245, 222, 179]),
    ("left upper arm", [255, 165, 0]),
    ("left upper leg", [154, 205, 50]),
    ("lower clothing", [75, 0, 130]),
    ("right foot", [210, 105, 30]),
    ("right hand", [255, 0, 0]),
    ("right lower arm", [57, 255, 20]),
    ("right lower leg", [100, 149, 237]),
    ("right shoe", [47, 79, 79]),
    ("right sock", [255, 255, 0]),
    ("right upper arm", [0, 0, 139]),
    ("right upper leg", [85, 107, 47]),
    ("torso", [0, 128, 0]),
    ("upper clothing", [220, 20, 60]),
    ("lower lip", [255, 20, 147]),
    ("upper lip", [178, 34, 34]),
    ("lower teeth", [240, 255, 240]),
    ("upper teeth", [176, 196, 222]),
    ("tongue", [250, 128, 114]),
    ("object", [200, 200, 200]),
];

/// The canonical 29-entry part palette.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartPalette {
    entries: Vec<PaletteEntry>,
}

/// Builds the canonical palette.
pub fn build_palette() -> PartPalette {
    PartPalette {
        entries: TABLE
            .iter()
            .enumerate()
            .map(|(id, &(name, rgb))| PaletteEntry {
                id: id as u8,
                name,
                rgb,
            })
            .collect(),
    }
}

impl PartPalette {
    pub fn entries(&self) -> &[PaletteEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn rgb(&self, id: u8) -> [u8; 3] {
        self.entries[id as usize].rgb
    }

    pub fn name(&self, id: u8) -> &'static str {
        self.entries[id as usize].name
    }

    pub fn id_by_name(&self, name: &str) -> Option<u8> {
        self.entries.iter().find(|e| e.name == name).map(|e| e.id)
    }

    /// Class id whose RGB has minimal squared Euclidean distance to `rgb`;
    /// ties break toward the lowest class id.
    pub fn nearest_class(&self, rgb: [f64; 3]) -> u8 {
        let mut best = 0u8;
        let mut best_d = f64::INFINITY;
        for e in &self.entries {
            let d: f64 = (0..3)
                .map(|c| {
                    let diff = rgb[c] - e.rgb[c] as f64;
                    diff * diff
                })
                .sum();
            if d < best_d {
                best_d = d;
                best = e.id;
            }
        }
        best
    }

    /// Exact RGB -> class lookup; `None` when the color is not a palette color.
    pub fn class_of_exact(&self, rgb: [u8; 3]) -> Option<u8> {
        self.entries.iter().find(|e| e.rgb == rgb).map(|e| e.id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn background_is_black_and_first() {
        let p = build_palette();
        assert_eq!(p.entries()[0].rgb, [0, 0, 0]);
        assert_eq!(p.entries()[0].id, BACKGROUND);
        assert_eq!(p.len(), NUM_CLASSES);
    }

    #[test]
    fn named_entries_match_canonical_colors() {
        let p = build_palette();
        assert_eq!(p.name(RIGHT_HAND), "right hand");
        assert_eq!(p.rgb(RIGHT_HAND), [255, 0, 0]);
        assert_eq!(p.rgb(LEFT_HAND), [255, 0, 255]);
        assert_eq!(p.rgb(OBJECT), [200, 200, 200]);
        assert_eq!(p.rgb(FACE_NECK), [137, 207, 240]);
        assert_eq!(p.rgb(HAIR), [255, 105, 180]);
        assert_eq!(p.rgb(TORSO), [0, 128, 0]);
        assert_eq!(p.rgb(LEFT_LOWER_ARM), [0, 128, 128]);
        assert_eq!(p.rgb(RIGHT_LOWER_ARM), [57, 255, 20]);
        assert_eq!(p.rgb(LEFT_UPPER_ARM), [255, 165, 0]);
        assert_eq!(p.rgb(RIGHT_UPPER_ARM), [0, 0, 139]);
    }

    #[test]
    fn all_rgbs_pairwise_distinct() {
        let p = build_palette();
        for a in p.entries() {
            for b in p.entries() {
                if a.id != b.id {
                    assert_ne!(a.rgb, b.rgb, "{} vs {}", a.name, b.name);
                }
            }
        }
    }

    #[test]
    fn nearest_color_projection_is_identity_on_palette() {
        let p = build_palette();
        for e in p.entries() {
            let rgb = [e.rgb[0] as f64, e.rgb[1] as f64, e.rgb[2] as f64];
            assert_eq!(p.nearest_class(rgb), e.id, "{}", e.name);
        }
    }
}
