use std::collections::{BTreeSet, HashMap};

use super::extract::{BlockKind, StructuredText};

/// Blocks with more links than this per word are treated as navigation.
pub const MAX_LINK_DENSITY: f64 = 0.5;
/// Repetition removal needs at least this many pages to be meaningful.
pub const MIN_PAGES_FOR_REPETITION: usize = 3;

/// Removes link-dense blocks, and blocks repeated verbatim on more than half
/// of an institution's pages. Headings are never treated as repeated chrome.
pub fn remove_boilerplate(pages: &[StructuredText]) -> Vec<StructuredText> {
    let mut repeated: BTreeSet<&str> = BTreeSet::new();
    if pages.len() >= MIN_PAGES_FOR_REPETITION {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for page in pages {
            let distinct: BTreeSet<&str> = page
                .blocks
                .iter()
                .filter(|b| !matches!(b.kind, BlockKind::Heading(_)))
                .map(|b| b.text.as_str())
                .collect();
            for t in distinct {
                *counts.entry(t).or_default() += 1;
            }
        }
        repeated = counts.into_iter().filter(|(_, c)| c * 2 > pages.len()).map(|(t, _)| t).collect();
    }
    pages
        .iter()
        .map(|page| StructuredText {
            blocks: page
                .blocks
                .iter()
                .filter(|b| b.link_density() <= MAX_LINK_DENSITY)
                .filter(|b| matches!(b.kind, BlockKind::Heading(_)) || !repeated.contains(b.text.as_str()))
                .cloned()
                .collect(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::extract::TextBlock;
    use proptest::prelude::*;

    fn para(t: &str) -> TextBlock {
        TextBlock { kind: BlockKind::Paragraph, text: t.into(), links: 0 }
    }

    fn page(ts: &[&str]) -> StructuredText {
        StructuredText { blocks: ts.iter().map(|t| para(t)).collect() }
    }

    #[test]
    fn footer_on_three_of_four_pages_goes() {
        let foot = "Visit us at 1 College Way.";
        let pages = vec![page(&["a", foot]), page(&["b", foot]), page(&["c", foot]), page(&["d"])];
        let out = remove_boilerplate(&pages);
        assert!(out.iter().all(|p| p.blocks.iter().all(|b| b.text != foot)));
        assert_eq!(out[3].blocks.len(), 1);
    }

    #[test]
    fn single_page_untouched() {
        let pages = vec![page(&["only", "page"])];
        assert_eq!(remove_boilerplate(&pages), pages);
    }

    #[test]
    fn half_is_not_more_than_half() {
        let pages = vec![page(&["x", "a"]), page(&["x", "b"]), page(&["c"]), page(&["d"])];
        let out = remove_boilerplate(&pages);
        assert_eq!(out[0].blocks.len(), 2);
    }

    #[test]
    fn link_dense_blocks_go() {
        let mut p = page(&["Home About Apply", "Deadlines are in January."]);
        p.blocks[0].links = 3;
        let out = remove_boilerplate(&[p]);
        assert_eq!(out[0].render(), "Deadlines are in January.");
    }

    proptest! {
        #[test]
        fn unique_blocks_survive(pages in proptest::collection::vec(proptest::collection::vec(0u8..6, 0..6), 3..8)) {
            let pages: Vec<StructuredText> = pages
                .iter()
                .enumerate()
                .map(|(i, bs)| StructuredText {
                    blocks: bs.iter().map(|b| para(&format!("shared {b}"))).chain([para(&format!("unique {i}"))]).collect(),
                })
                .collect();
            let out = remove_boilerplate(&pages);
            for (i, p) in out.iter().enumerate() {
                let unique = format!("unique {i}");
                prop_assert!(p.blocks.iter().any(|b| b.text == unique));
            }
        }
    }
}
