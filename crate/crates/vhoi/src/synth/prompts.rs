//! Fixed prompt vocabulary and deterministic prompt construction.
//!
//! Prompts are short token-id sequences over a closed symbol set. The
//! motion-only variant carries verbs, the acting part and the object
//! reference; the full variant prefixes appearance symbols (shirt color,
//! object color/shape, background style). Destinations, directions and
//! timings are deliberately not tokenized, so a prompt underdetermines the
//! motion and conditioning signals carry real information.

use super::{Difficulty, PhaseKind, SceneSpec};

/// Number of text token slots consumed by the backbone.
pub const PROMPT_LEN: usize = 8;

pub const PAD: u16 = 0;

/// The closed vocabulary. Index == token id.
pub const VOCAB: [&str; 64] = [
    "<pad>",
    // verbs
    "idle", "navigate", "reach", "grasp", "carry", "release",
    // parts and references
    "right-hand", "left-hand", "right-arm", "left-arm", "torso", "head",
    "face", "hair", "body", "object",
    // shirt colors (appearance)
    "shirt-red", "shirt-blue", "shirt-green", "shirt-olive", "shirt-purple", "shirt-gray",
    // skin tones (appearance)
    "skin-light", "skin-tan", "skin-brown", "skin-dark",
    // hair colors (appearance)
    "hair-dark", "hair-blonde", "hair-auburn", "hair-gray",
    // object colors (appearance)
    "obj-slate", "obj-copper", "obj-moss", "obj-navy", "obj-cream", "obj-plum",
    // object shapes (appearance)
    "obj-square", "obj-round",
    // background styles (appearance)
    "bg-cool", "bg-warm", "bg-green", "bg-violet",
    // reserved modifiers (not emitted by the generator)
    "left", "right", "up", "down", "toward", "away", "fast", "slow",
    "near", "far", "small", "large", "smooth", "sudden", "short", "long",
    "begin", "finish", "turn", "push", "pull",
];

const VERB_BASE: u16 = 1;
const SHIRT_BASE: u16 = 17;
const OBJ_COLOR_BASE: u16 = 31;
const OBJ_SHAPE_BASE: u16 = 37;
const BG_BASE: u16 = 39;

pub fn token(name: &str) -> u16 {
    VOCAB
        .iter()
        .position(|&t| t == name)
        .unwrap_or_else(|| panic!("unknown token {name}")) as u16
}

/// Ids of every appearance symbol (used to keep motion prompts clean).
pub fn appearance_vocabulary() -> Vec<u16> {
    (SHIRT_BASE..BG_BASE + 4).collect()
}

fn verb(kind: PhaseKind) -> u16 {
    VERB_BASE
        + match kind {
            PhaseKind::Idle => 0,
            PhaseKind::Navigate => 1,
            PhaseKind::Reach => 2,
            PhaseKind::Grasp => 3,
            PhaseKind::Carry => 4,
            PhaseKind::Release => 5,
        }
}

fn pad_to(mut v: Vec<u16>, n: usize) -> Vec<u16> {
    v.truncate(n);
    while v.len() < n {
        v.push(PAD);
    }
    v
}

/// Deterministic (motion-only, full) prompt token sequences for a scene.
pub fn make_prompts(spec: &SceneSpec) -> (Vec<u16>, Vec<u16>) {
    let mut motion = Vec::new();
    let mut emitted_part = false;
    for p in &spec.phases {
        let v = verb(p.kind);
        if !motion.contains(&v) {
            motion.push(v);
        }
        if !emitted_part && matches!(p.kind, PhaseKind::Reach) {
            motion.push(token("right-hand"));
            motion.push(token("object"));
            emitted_part = true;
        }
    }
    if spec.difficulty == Difficulty::Static && !motion.contains(&token("idle")) {
        motion.insert(0, token("idle"));
    }

    let appearance = vec![
        SHIRT_BASE + spec.appearance.shirt_idx as u16,
        OBJ_COLOR_BASE + spec.appearance.object_idx as u16,
        OBJ_SHAPE_BASE
            + match spec.object.shape {
                super::ObjectShape::Square => 0,
                super::ObjectShape::Disk => 1,
            },
        BG_BASE + (spec.appearance.bg_style % 4) as u16,
    ];
    let mut full = appearance;
    full.extend_from_slice(&motion);

    (pad_to(motion, PROMPT_LEN), pad_to(full, PROMPT_LEN))
}

/// Token ids -> readable strings (for prompts.json).
pub fn detokenize(ids: &[u16]) -> Vec<String> {
    ids.iter().map(|&i| VOCAB[i as usize].to_string()).collect()
}

/// Readable strings -> token ids.
pub fn tokenize(words: &[String]) -> crate::Result<Vec<u16>> {
    words
        .iter()
        .map(|wrd| {
            VOCAB
                .iter()
                .position(|&t| t == wrd)
                .map(|i| i as u16)
                .ok_or_else(|| crate::Error::Data(format!("unknown prompt token {wrd:?}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::generate_scene;

    #[test]
    fn vocabulary_is_unique_and_sized() {
        for (i, a) in VOCAB.iter().enumerate() {
            for b in VOCAB.iter().skip(i + 1) {
                assert_ne!(a, b);
            }
        }
        assert_eq!(VOCAB.len(), 64);
        assert_eq!(VOCAB[SHIRT_BASE as usize], "shirt-red");
        assert_eq!(VOCAB[OBJ_COLOR_BASE as usize], "obj-slate");
        assert_eq!(VOCAB[OBJ_SHAPE_BASE as usize], "obj-square");
        assert_eq!(VOCAB[BG_BASE as usize], "bg-cool");
    }

    #[test]
    fn reach_prompt_contains_reach_hand_object() {
        let spec = generate_scene(1, Difficulty::Reach);
        let (motion, full) = make_prompts(&spec);
        for name in ["reach", "right-hand", "object"] {
            assert!(motion.contains(&token(name)), "missing {name}: {motion:?}");
            assert!(full.contains(&token(name)) || full.len() == PROMPT_LEN);
        }
        assert_eq!(motion.len(), PROMPT_LEN);
        assert_eq!(full.len(), PROMPT_LEN);
    }

    #[test]
    fn motion_prompt_never_contains_appearance_tokens() {
        let app = appearance_vocabulary();
        for seed in 0..12 {
            for d in [Difficulty::Static, Difficulty::Reach, Difficulty::NavigateThenInteract] {
                let spec = generate_scene(seed, d);
                let (motion, _) = make_prompts(&spec);
                assert!(motion.iter().all(|t| !app.contains(t)), "{motion:?}");
            }
        }
    }

    #[test]
    fn prompts_deterministic_and_pairs_share_them() {
        let a = make_prompts(&generate_scene(4, Difficulty::Reach));
        let b = make_prompts(&generate_scene(4, Difficulty::Reach));
        assert_eq!(a, b);
        let odd = make_prompts(&generate_scene(5, Difficulty::Reach));
        assert_eq!(a, odd, "paired seeds must share prompts");
    }

    #[test]
    fn tokenize_round_trip() {
        let ids = vec![token("reach"), token("object"), PAD];
        let words = detokenize(&ids);
        assert_eq!(tokenize(&words).unwrap(), ids);
        assert!(tokenize(&["nope".to_string()]).is_err());
    }
}
