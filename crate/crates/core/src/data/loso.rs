use super::{ClusterMap, DataError, SampleSet};

/// One leave-one-cluster-out fold.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LosoSplit {
    /// Held-out cluster.
    pub fold: String,
    /// Training clusters; position is the discriminator label.
    pub train_clusters: Vec<String>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    /// Dense training-domain label per sample index (`usize::MAX` outside train).
    domain: Vec<usize>,
}

impl LosoSplit {
    pub fn domains(&self) -> usize {
        self.train_clusters.len()
    }

    /// Discriminator label of sample `i`, `None` unless it is a training sample.
    pub fn domain_of(&self, i: usize) -> Option<usize> {
        self.domain.get(i).copied().filter(|&d| d != usize::MAX)
    }
}

/// One fold per cluster, in cluster-name order. Subjects are matched by id;
/// samples whose subject is in no cluster are left out of every fold.
pub fn make_loso_splits(set: &SampleSet, clusters: &ClusterMap) -> Result<Vec<LosoSplit>, DataError> {
    let names = clusters.names();
    if names.len() < 2 {
        return Err(DataError::Split(format!(
            "need at least two clusters to hold one out, got {}",
            names.len()
        )));
    }
    let cluster_of: Vec<Option<usize>> = set.samples.iter().map(|s| clusters.domain_of(&s.subject)).collect();
    for (c, name) in names.iter().enumerate() {
        if !cluster_of.contains(&Some(c)) {
            return Err(DataError::Split(format!("cluster {name} has no samples")));
        }
    }
    let mut out = Vec::new();
    for (held, name) in names.iter().enumerate() {
        let dense = |c: usize| if c < held { c } else { c - 1 };
        let mut split = LosoSplit {
            fold: name.clone(),
            train_clusters: names.iter().enumerate().filter(|&(c, _)| c != held).map(|(_, n)| n.clone()).collect(),
            train: Vec::new(),
            test: Vec::new(),
            domain: vec![usize::MAX; set.len()],
        };
        for (i, c) in cluster_of.iter().enumerate() {
            match *c {
                Some(c) if c == held => split.test.push(i),
                Some(c) => {
                    split.train.push(i);
                    split.domain[i] = dense(c);
                }
                None => {}
            }
        }
        out.push(split);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Provenance, WindowedSample};

    fn set_with(subjects: &[&str]) -> SampleSet {
        let mut set = SampleSet::empty(1, 1, 2, vec!["a".into(), "b".into()], vec![]);
        for (i, s) in subjects.iter().enumerate() {
            set.samples.push(WindowedSample {
                x: vec![0.0, 1.0],
                activity: i % 2,
                domain: 0,
                subject: s.to_string(),
                provenance: Provenance {
                    file: format!("f{i}"),
                    offset: 0,
                },
            });
        }
        set
    }

    #[test]
    fn dsads_clusters_give_four_folds() {
        let subjects: Vec<String> = (0..40).map(|i| ((i % 8) + 1).to_string()).collect();
        let refs: Vec<&str> = subjects.iter().map(String::as_str).collect();
        let set = set_with(&refs);
        let clusters = ClusterMap::dsads();
        let splits = make_loso_splits(&set, &clusters).unwrap();
        assert_eq!(splits.iter().map(|s| s.fold.as_str()).collect::<Vec<_>>(), ["A", "B", "C", "D"]);
        for split in &splits {
            assert_eq!(split.domains(), 3);
            assert_eq!(split.train.len() + split.test.len(), set.len());
            // brute-force membership scan over every pair
            for &t in &split.test {
                for &r in &split.train {
                    assert_ne!(t, r);
                    assert_eq!(split.domain_of(t), None);
                    assert_ne!(set.samples[t].subject, set.samples[r].subject);
                }
                assert!(clusters.clusters[&split.fold].contains(&set.samples[t].subject));
            }
            let mut seen: Vec<usize> = split.train.iter().map(|&i| split.domain_of(i).unwrap()).collect();
            seen.sort();
            seen.dedup();
            assert_eq!(seen, [0, 1, 2]);
            for &i in &split.train {
                let cluster = clusters.domain_of(&set.samples[i].subject).unwrap();
                assert_eq!(split.train_clusters[split.domain_of(i).unwrap()], clusters.names()[cluster]);
            }
        }
    }

    #[test]
    fn one_cluster_is_an_error() {
        let set = set_with(&["1", "2"]);
        let c = ClusterMap::new([("A".to_string(), vec!["1".to_string(), "2".to_string()])]).unwrap();
        assert!(matches!(make_loso_splits(&set, &c), Err(DataError::Split(_))));
    }

    #[test]
    fn unknown_subjects_are_left_out() {
        let set = set_with(&["S1", "S2", "S3", "S4", "S9"]);
        let splits = make_loso_splits(&set, &ClusterMap::oppt()).unwrap();
        for s in &splits {
            assert_eq!(s.train.len() + s.test.len(), 4);
            assert!(!s.train.contains(&4) && !s.test.contains(&4));
        }
    }
}
