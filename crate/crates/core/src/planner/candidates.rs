//! Candidate patch shapes for one channel.
//!
//! Exhausting every `(ph, pw)` rectangle is wasteful — neighboring sizes gate
//! almost identically — so sizes come from a canonical ladder: dense at the
//! bottom where each step matters, then growing by alternating ×4/3 and ×3/2
//! so the count stays logarithmic in the channel side. The ladder is a
//! documented convention, not a derived quantity; everything downstream only
//! assumes it is deterministic and includes 1.

use crate::patch::PatchSpec;

/// Canonical patch side lengths up to `dim`:
/// `1,2,3,4,5,6,8,10,12,16,24,32,48,64,96,128,192,...`.
pub fn size_set(dim: u32) -> Vec<u32> {
    let mut sizes: Vec<u32> = [1u32, 2, 3, 4, 5, 6, 8, 10, 12]
        .into_iter()
        .take_while(|&s| s <= dim)
        .collect();
    // From 12 upward, alternate ×4/3 and ×3/2; both always land on integers.
    let (mut cur, mut wide_step) = (12u32, true);
    while sizes.last() == Some(&cur) {
        cur = if wide_step { cur / 3 * 4 } else { cur / 2 * 3 };
        wide_step = !wide_step;
        if cur <= dim {
            sizes.push(cur);
        }
    }
    sizes
}

/// All candidate gatings for an `h × w` channel: every rectangle from the
/// size ladder that fits, in lexicographic `(ph, pw)` order, then identity
/// (no gating at all) last. `Patch { 1, 1 }` — plain elementwise ReLU — is
/// always present, and always first.
pub fn candidate_specs(h: u32, w: u32) -> Vec<PatchSpec> {
    let hs = size_set(h);
    let ws = size_set(w);
    let mut specs = Vec::with_capacity(hs.len() * ws.len() + 1);
    for &ph in &hs {
        for &pw in &ws {
            specs.push(PatchSpec::Patch { ph, pw });
        }
    }
    specs.push(PatchSpec::Identity);
    specs
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ladder_is_the_documented_sequence() {
        assert_eq!(
            size_set(512),
            vec![1, 2, 3, 4, 5, 6, 8, 10, 12, 16, 24, 32, 48, 64, 96, 128, 192, 256, 384, 512]
        );
        assert_eq!(size_set(1), vec![1]);
        assert_eq!(size_set(4), vec![1, 2, 3, 4]);
        assert_eq!(size_set(6), vec![1, 2, 3, 4, 5, 6]);
        // Sizes off the ladder are not invented to fill the extent.
        assert_eq!(size_set(7), vec![1, 2, 3, 4, 5, 6]);
        assert_eq!(size_set(100), vec![1, 2, 3, 4, 5, 6, 8, 10, 12, 16, 24, 32, 48, 64, 96]);
    }

    #[test]
    fn four_by_four_has_seventeen_candidates() {
        let specs = candidate_specs(4, 4);
        assert_eq!(specs.len(), 17);
        assert_eq!(specs[0], PatchSpec::Patch { ph: 1, pw: 1 });
        assert_eq!(*specs.last().unwrap(), PatchSpec::Identity);
        for s in &specs {
            s.validate(4, 4).unwrap();
        }
        // Lexicographic in (ph, pw).
        let rects: Vec<(u32, u32)> = specs
            .iter()
            .filter_map(|s| match s {
                PatchSpec::Patch { ph, pw } => Some((*ph, *pw)),
                PatchSpec::Identity => None,
            })
            .collect();
        let mut sorted = rects.clone();
        sorted.sort();
        assert_eq!(rects, sorted);
    }

    #[test]
    fn degenerate_channel_still_offers_both_choices() {
        assert_eq!(
            candidate_specs(1, 1),
            vec![PatchSpec::Patch { ph: 1, pw: 1 }, PatchSpec::Identity]
        );
    }

    #[test]
    fn large_channels_stay_tractable() {
        // 20 ladder sizes per axis → 401 candidates, not 512² = 262k.
        assert_eq!(candidate_specs(512, 512).len(), 20 * 20 + 1);
        assert_eq!(candidate_specs(64, 32).len(), 14 * 12 + 1);
    }

    #[test]
    fn rectangular_channels_use_per_axis_ladders() {
        for spec in candidate_specs(12, 3) {
            spec.validate(12, 3).unwrap();
        }
        assert_eq!(candidate_specs(12, 3).len(), 9 * 3 + 1);
    }
}
