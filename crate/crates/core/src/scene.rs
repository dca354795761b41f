//! The closed catalog of drawable objects used by synthetic prompt images and
//! by the concept-level image encoder.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Disc,
    Box,
    Triangle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SceneObject {
    pub name: &'static str,
    pub rgb: [u8; 3],
    pub shape: Shape,
    /// Activity phrase in third person singular, e.g. "chases a ball".
    pub activity: &'static str,
}

pub const CATALOG: &[SceneObject] = &[
    SceneObject {
        name: "dog",
        rgb: [139, 69, 19],
        shape: Shape::Box,
        activity: "runs in the park",
    },
    SceneObject {
        name: "ball",
        rgb: [220, 20, 20],
        shape: Shape::Disc,
        activity: "rolls on the grass",
    },
    SceneObject {
        name: "tree",
        rgb: [20, 140, 40],
        shape: Shape::Triangle,
        activity: "grows near the river",
    },
    SceneObject {
        name: "car",
        rgb: [30, 60, 220],
        shape: Shape::Box,
        activity: "drives on the road",
    },
    SceneObject {
        name: "sun",
        rgb: [250, 220, 30],
        shape: Shape::Disc,
        activity: "shines in the sky",
    },
    SceneObject {
        name: "cat",
        rgb: [128, 128, 128],
        shape: Shape::Box,
        activity: "sleeps under the tree",
    },
    SceneObject {
        name: "bird",
        rgb: [0, 200, 200],
        shape: Shape::Triangle,
        activity: "flies over the house",
    },
    SceneObject {
        name: "boat",
        rgb: [250, 140, 0],
        shape: Shape::Box,
        activity: "floats on the river",
    },
    SceneObject {
        name: "flower",
        rgb: [230, 50, 200],
        shape: Shape::Disc,
        activity: "grows in the garden",
    },
    SceneObject {
        name: "kite",
        rgb: [120, 40, 200],
        shape: Shape::Triangle,
        activity: "flies in the sky",
    },
];

pub fn object(name: &str) -> Option<&'static SceneObject> {
    CATALOG.iter().find(|o| o.name == name)
}

/// Catalog objects whose colour covers at least `min_fraction` of the pixels
/// (within a per-channel tolerance of 24).
pub fn detect_objects(rgb_pixels: impl Iterator<Item = [u8; 3]>, min_fraction: f64) -> Vec<&'static str> {
    let mut counts = vec![0usize; CATALOG.len()];
    let mut total = 0usize;
    for px in rgb_pixels {
        total += 1;
        for (i, o) in CATALOG.iter().enumerate() {
            if px
                .iter()
                .zip(o.rgb.iter())
                .all(|(&a, &b)| (a as i32 - b as i32).abs() <= 24)
            {
                counts[i] += 1;
                break;
            }
        }
    }
    if total == 0 {
        return Vec::new();
    }
    CATALOG
        .iter()
        .zip(counts)
        .filter(|(_, c)| *c as f64 / total as f64 >= min_fraction)
        .map(|(o, _)| o.name)
        .collect()
}
