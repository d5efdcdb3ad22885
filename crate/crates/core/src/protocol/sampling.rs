//! Pool splitting: the classifier's per-group draw and nested undersampling.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::Corpus;
use crate::error::{Error, Result};

/// Result of a per-group draw, as sorted positions into the source pool.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupDraw {
    pub drawn: Vec<usize>,
    pub remaining: Vec<usize>,
    /// `(group, available)` for every group that had fewer than requested.
    pub shortfalls: Vec<(usize, usize)>,
}

/// Draws `per_group` documents of each group uniformly at random; a group
/// with fewer documents contributes all of them.
pub fn draw_per_group_indices(corpus: &Corpus, per_group: usize, seed: u64) -> Result<GroupDraw> {
    let n = corpus.class_count;
    let mut members = vec![Vec::new(); n];
    for (i, d) in corpus.documents.iter().enumerate() {
        members[d.group.ok_or(Error::UnlabeledItem)?].push(i);
    }
    if let Some(g) = members.iter().position(Vec::is_empty) {
        return Err(Error::invalid(
            "labeled pool",
            format!("group {:?} has no documents", corpus.groups.name(g)),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut taken = vec![false; corpus.len()];
    let mut shortfalls = Vec::new();
    for (g, m) in members.iter_mut().enumerate() {
        m.shuffle(&mut rng);
        if m.len() < per_group {
            shortfalls.push((g, m.len()));
        }
        for &i in m.iter().take(per_group) {
            taken[i] = true;
        }
    }
    let (drawn, remaining) = (0..corpus.len()).partition(|&i| taken[i]);
    Ok(GroupDraw {
        drawn,
        remaining,
        shortfalls,
    })
}

/// Corpus-level form of [`draw_per_group_indices`]: `(drawn, remaining)`.
pub fn draw_per_group(corpus: &Corpus, per_group: usize, seed: u64) -> Result<(Corpus, Corpus)> {
    let draw = draw_per_group_indices(corpus, per_group, seed)?;
    for &(g, have) in &draw.shortfalls {
        log::warn!(
            "group {:?} has {have} documents, fewer than the {per_group} requested",
            corpus.groups.name(g)
        );
    }
    let pick = |ix: &[usize]| corpus.with_documents(ix.iter().map(|&i| corpus.documents[i].clone()).collect());
    Ok((pick(&draw.drawn), pick(&draw.remaining)))
}

/// A seeded permutation whose prefixes are the nested pools of a size sweep.
pub fn pool_permutation(len: usize, seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..len).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    perm
}

/// The first `size` entries of `perm`, sorted.
pub fn undersample_indices(perm: &[usize], size: usize) -> Result<Vec<usize>> {
    if size > perm.len() {
        return Err(Error::invalid(
            "pool size",
            format!("{size} exceeds the {} available documents", perm.len()),
        ));
    }
    let mut ix = perm[..size].to_vec();
    ix.sort_unstable();
    Ok(ix)
}

/// Uniform subset of `size` documents; equal seeds give nested subsets.
pub fn undersample_pool(corpus: &Corpus, size: usize, seed: u64) -> Result<Corpus> {
    let ix = undersample_indices(&pool_permutation(corpus.len(), seed), size)?;
    Ok(corpus.with_documents(ix.into_iter().map(|i| corpus.documents[i].clone()).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Document, GroupTable};
    use std::collections::HashSet;

    fn corpus(groups: &[usize]) -> Corpus {
        let docs = groups
            .iter()
            .enumerate()
            .map(|(i, &g)| Document::new(format!("d{i:04}"), vec!["t".into()], Some(g)))
            .collect();
        Corpus::new(docs, GroupTable::from_names(["a", "b", "c"]), "g").unwrap()
    }

    #[test]
    fn balanced_draw_is_exactly_uniform_and_disjoint() {
        let groups: Vec<usize> = (0..300).map(|i| [0, 0, 0, 1, 1, 2][i % 6]).collect();
        let c = corpus(&groups);
        let (drawn, rest) = draw_per_group(&c, 40, 9).unwrap();
        assert_eq!(drawn.len(), 120);
        for g in 0..3 {
            assert_eq!(drawn.documents.iter().filter(|d| d.group == Some(g)).count(), 40);
        }
        assert_eq!(rest.len(), 180);
        let ids: HashSet<&str> = drawn.documents.iter().map(|d| d.id.as_str()).collect();
        assert!(rest.documents.iter().all(|d| !ids.contains(d.id.as_str())));
    }

    #[test]
    fn short_group_gives_everything() {
        let c = corpus(&[0, 0, 0, 0, 1, 1, 1, 1, 2]);
        let draw = draw_per_group_indices(&c, 3, 1).unwrap();
        assert_eq!(draw.drawn.len(), 7);
        assert!(draw.drawn.contains(&8));
        assert_eq!(draw.shortfalls, vec![(2, 1)]);
    }

    #[test]
    fn empty_group_or_unlabeled_is_an_error() {
        assert!(draw_per_group_indices(&corpus(&[0, 1, 0]), 1, 0).is_err());
        let mut c = corpus(&[0, 1, 2]);
        c.documents[1].group = None;
        assert!(matches!(draw_per_group_indices(&c, 1, 0), Err(Error::UnlabeledItem)));
    }

    #[test]
    fn draw_depends_only_on_seed() {
        let groups: Vec<usize> = (0..90).map(|i| i % 3).collect();
        let c = corpus(&groups);
        assert_eq!(draw_per_group_indices(&c, 5, 4).unwrap(), draw_per_group_indices(&c, 5, 4).unwrap());
        assert_ne!(
            draw_per_group_indices(&c, 5, 4).unwrap().drawn,
            draw_per_group_indices(&c, 5, 5).unwrap().drawn
        );
    }

    #[test]
    fn undersampling_is_nested() {
        let perm = pool_permutation(1000, 11);
        let small: HashSet<usize> = undersample_indices(&perm, 100).unwrap().into_iter().collect();
        let mid: HashSet<usize> = undersample_indices(&perm, 400).unwrap().into_iter().collect();
        assert!(small.is_subset(&mid));
        assert_eq!(undersample_indices(&perm, 1000).unwrap(), (0..1000).collect::<Vec<_>>());
        assert!(undersample_indices(&perm, 1001).is_err());

        let c = corpus(&vec![0; 50].into_iter().chain(vec![1; 30]).chain(vec![2; 20]).collect::<Vec<_>>());
        assert_eq!(undersample_pool(&c, 100, 2).unwrap(), c);
        assert_eq!(undersample_pool(&c, 10, 2).unwrap(), undersample_pool(&c, 10, 2).unwrap());
    }
}
