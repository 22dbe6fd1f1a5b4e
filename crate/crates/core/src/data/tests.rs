use std::fs;
use std::path::Path;

use super::*;

fn write(dir: &Path, name: &str, body: &str) {
    fs::write(dir.join(name), body).unwrap();
}

fn tiny(dir: &Path) {
    write(dir, "stat.txt", "10\t3\n");
    write(dir, "train.txt", "4\t2\t7\t0\n1\t0\t2\t24\n");
    write(dir, "valid.txt", "3\t1\t4\t48\n");
    write(dir, "test.txt", "5\t1\t6\t72\n");
    write(dir, "ontology.txt", "0\t0\t10\n4\t0\t11\n10\t1\t12\n");
}

#[test]
fn parses_quadruples_and_maps_timestamps() {
    let dir = tempfile::tempdir().unwrap();
    tiny(dir.path());
    let b = DatasetBundle::load(dir.path()).unwrap();
    assert_eq!(b.train[0], Quadruple::new(4, 2, 7, 0));
    assert_eq!(b.raw_timestamps, vec![0, 24, 48, 72]);
    assert_eq!(b.train[1].t, 1);
    assert_eq!(b.valid[0].t, 2);
    assert_eq!(b.test[0].t, 3);
    assert_eq!(b.ontology.num_concepts(), 3);
    assert_eq!(b.ontology.num_relations(), 2);
    assert_eq!(b.train_degree[4], 1);
    assert!(!b.is_augmented());
}

#[test]
fn timestamp_ranks_match_sort_unique() {
    let dir = tempfile::tempdir().unwrap();
    tiny(dir.path());
    write(dir.path(), "train.txt", "1\t0\t2\t48\n1\t0\t3\t0\n2\t1\t3\t24\n");
    write(dir.path(), "valid.txt", "1\t0\t2\t96\n");
    write(dir.path(), "test.txt", "1\t0\t2\t120\n");
    let b = DatasetBundle::load(dir.path()).unwrap();
    let ts: Vec<u32> = b.train.iter().map(|q| q.t).collect();
    assert_eq!(ts, vec![2, 0, 1]);
}

#[test]
fn relation_out_of_range() {
    let dir = tempfile::tempdir().unwrap();
    tiny(dir.path());
    write(dir.path(), "train.txt", "4\t5\t7\t0\n");
    let err = DatasetBundle::load(dir.path()).unwrap_err();
    assert!(
        matches!(
            err,
            Error::IdOutOfRange {
                what: "relation",
                id: 5,
                limit: 3
            }
        ),
        "{err}"
    );
}

#[test]
fn missing_file_and_bad_tokens() {
    let dir = tempfile::tempdir().unwrap();
    tiny(dir.path());
    fs::remove_file(dir.path().join("ontology.txt")).unwrap();
    assert!(matches!(DatasetBundle::load(dir.path()), Err(Error::MissingFile(_))));

    tiny(dir.path());
    write(dir.path(), "valid.txt", "3\tx\t4\t48\n");
    assert!(matches!(DatasetBundle::load(dir.path()), Err(Error::Parse { .. })));

    tiny(dir.path());
    write(dir.path(), "test.txt", "\n");
    assert!(matches!(
        DatasetBundle::load(dir.path()),
        Err(Error::EmptySplit("test"))
    ));
}

#[test]
fn inverse_augmentation_of_quadruples() {
    let dir = tempfile::tempdir().unwrap();
    tiny(dir.path());
    let b = DatasetBundle::load(dir.path()).unwrap();
    let a = b.augment_inverse().unwrap();
    assert_eq!(a.train.len(), 2 * b.train.len());
    assert!(a.train.contains(&Quadruple::new(7, 5, 4, 0)));
    assert_eq!(a.relation_space(), 6);
    assert!(a.ontology.facts().contains(&OntoFact {
        head: 10,
        rel: 2,
        tail: 0
    }));
    assert!(matches!(a.augment_inverse(), Err(Error::AlreadyAugmented)));
}

#[test]
fn snapshot_sizes_keep_empty_timestamps() {
    let facts = vec![
        Quadruple::new(0, 0, 1, 0),
        Quadruple::new(1, 0, 2, 0),
        Quadruple::new(2, 0, 0, 2),
    ];
    let snaps = group_snapshots(&facts);
    let sizes: Vec<usize> = snaps.iter().map(|s| s.facts.len()).collect();
    assert_eq!(sizes, vec![2, 0, 1]);
    assert!(snaps.iter().enumerate().all(|(t, s)| s.t as usize == t));
    assert!(group_snapshots(&[]).is_empty());
}

#[test]
fn snapshot_adjacency() {
    let s = Snapshot::new(0, vec![Quadruple::new(4, 2, 7, 0)]);
    assert_eq!(s.out_edges[&4], vec![(2, 7)]);
    assert_eq!(s.in_edges[&7], vec![(2, 4)]);
}

#[test]
fn snapshots_cover_all_augmented_facts() {
    let dir = tempfile::tempdir().unwrap();
    tiny(dir.path());
    let b = DatasetBundle::load(dir.path()).unwrap();
    let a = b.augment_inverse().unwrap();
    let total: usize = a.snapshots(Split::Train).iter().map(|s| s.facts.len()).sum();
    assert_eq!(total, 2 * b.train.len());
    assert_eq!(a.timeline().len(), 4);
}

#[test]
fn degree_buckets() {
    assert_eq!(DegreeBucket::of_degree(0).label(), "[0,10]");
    assert_eq!(DegreeBucket::of_degree(9), DegreeBucket::D0To10);
    assert_eq!(DegreeBucket::of_degree(10), DegreeBucket::D10To20);
    assert_eq!(DegreeBucket::of_degree(55).label(), "[50,100]");
    assert_eq!(DegreeBucket::of_degree(99), DegreeBucket::D50To100);
    assert_eq!(DegreeBucket::of_degree(100).label(), "[100,max]");
}

#[test]
fn write_then_load_is_identity() {
    let dir = tempfile::tempdir().unwrap();
    tiny(dir.path());
    let b = DatasetBundle::load(dir.path()).unwrap();
    let out = tempfile::tempdir().unwrap();
    b.write_to(out.path()).unwrap();
    assert_eq!(DatasetBundle::load(out.path()).unwrap(), b);
}
