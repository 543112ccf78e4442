use std::path::PathBuf;

use crowdtune_core::{parse_movielens, PopulationSource};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/ml_mini").join(name)
}

const ACTION: usize = 1;
const ADVENTURE: usize = 2;
const ANIMATION: usize = 3;
const CHILDRENS: usize = 4;
const COMEDY: usize = 5;
const CRIME: usize = 6;
const DRAMA: usize = 8;
const THRILLER: usize = 16;

fn expected() -> Vec<Vec<(usize, f64)>> {
    vec![
        // raw user 22: 5 + 3 + 4 + 1 = 13 rating points
        vec![
            (ACTION, 4.0 / 13.0),
            (ADVENTURE, 3.0 / 13.0),
            (ANIMATION, 5.0 / 13.0),
            (CHILDRENS, 5.0 / 13.0),
            (COMEDY, 6.0 / 13.0),
            (DRAMA, 1.0 / 13.0),
            (THRILLER, 7.0 / 13.0),
        ],
        // raw user 115: 16 points
        vec![
            (ACTION, 6.0 / 16.0),
            (ADVENTURE, 2.0 / 16.0),
            (COMEDY, 5.0 / 16.0),
            (CRIME, 4.0 / 16.0),
            (DRAMA, 4.0 / 16.0),
            (THRILLER, 11.0 / 16.0),
        ],
        // raw user 186: two Action movies rated 4, one also Comedy
        vec![(ACTION, 1.0), (COMEDY, 0.5)],
        // raw user 196: a single Comedy-only movie rated 5
        vec![(COMEDY, 1.0)],
        // raw user 244: 11 points
        vec![
            (ACTION, 5.0 / 11.0),
            (ADVENTURE, 5.0 / 11.0),
            (ANIMATION, 4.0 / 11.0),
            (CHILDRENS, 4.0 / 11.0),
            (COMEDY, 4.0 / 11.0),
            (CRIME, 2.0 / 11.0),
            (DRAMA, 2.0 / 11.0),
            (THRILLER, 7.0 / 11.0),
        ],
        // raw user 298: 17 points
        vec![
            (ACTION, 8.0 / 17.0),
            (ANIMATION, 4.0 / 17.0),
            (CHILDRENS, 4.0 / 17.0),
            (COMEDY, 11.0 / 17.0),
            (CRIME, 3.0 / 17.0),
            (DRAMA, 8.0 / 17.0),
            (THRILLER, 3.0 / 17.0),
        ],
    ]
}

#[test]
fn fixture_parses_to_hand_computed_vectors() {
    let pop = parse_movielens(&fixture("u.data"), &fixture("u.item")).unwrap();
    assert_eq!(pop.source(), PopulationSource::MovieLens);
    assert_eq!(pop.dim(), 19);
    assert_eq!(pop.len(), 6);
    assert!(pop.has_contiguous_ids());
    for (user, nonzero) in pop.users().iter().zip(expected()) {
        let mut want = [0.0; 19];
        for (g, x) in nonzero {
            want[g] = x;
        }
        assert_eq!(user.prefs.components(), &want[..], "user {}", user.user_id);
    }
}

#[test]
fn row_order_does_not_matter() {
    let dir = std::env::temp_dir().join(format!("crowdtune-ml-order-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let data = std::fs::read_to_string(fixture("u.data")).unwrap();
    let items = std::fs::read_to_string(fixture("u.item")).unwrap();
    let mut lines: Vec<&str> = data.lines().collect();
    lines.reverse();
    let mut item_lines: Vec<&str> = items.lines().collect();
    item_lines.rotate_left(3);
    std::fs::write(dir.join("u.data"), lines.join("\n")).unwrap();
    std::fs::write(dir.join("u.item"), item_lines.join("\n")).unwrap();
    let a = parse_movielens(&fixture("u.data"), &fixture("u.item")).unwrap();
    let b = parse_movielens(&dir.join("u.data"), &dir.join("u.item")).unwrap();
    std::fs::remove_dir_all(&dir).unwrap();
    assert_eq!(a, b);
}

#[test]
fn components_are_bounded() {
    let pop = parse_movielens(&fixture("u.data"), &fixture("u.item")).unwrap();
    for u in pop.users() {
        assert!(u.prefs.components().iter().all(|c| (0.0..=1.0).contains(c)));
    }
}

#[test]
fn missing_file_names_path() {
    let err = parse_movielens(&fixture("nope.data"), &fixture("u.item")).unwrap_err();
    assert!(err.to_string().contains("nope.data"));
}
