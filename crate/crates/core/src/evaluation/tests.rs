use super::*;
use alloc::collections::BTreeSet;
use alloc::string::ToString;
use alloc::vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn set(v: &[usize]) -> BTreeSet<usize> {
    v.iter().copied().collect()
}

#[test]
fn cnpmi_perfect_cooccurrence_at_half() {
    let reference = AlignedReference::new(vec![
        (set(&[0]), set(&[0])),
        (set(&[0]), set(&[0])),
        (set(&[1]), set(&[1])),
        (set(&[1]), set(&[1])),
    ])
    .unwrap();
    let topics = TopicSet::new(1, vec![[vec![0], vec![0]]]).unwrap();
    assert!((cnpmi(&topics, &reference).unwrap() - 1.0).abs() < 1e-9);
}

#[test]
fn cnpmi_conventions() {
    let reference = AlignedReference::new(vec![(set(&[0, 2]), set(&[1, 2])), (set(&[1, 2]), set(&[0, 2]))]).unwrap();
    // never together with nonzero marginals
    let never = TopicSet::new(1, vec![[vec![0], vec![0]]]).unwrap();
    assert_eq!(cnpmi(&never, &reference).unwrap(), -1.0);
    // present in every pair
    let always = TopicSet::new(1, vec![[vec![2], vec![2]]]).unwrap();
    assert_eq!(cnpmi(&always, &reference).unwrap(), 0.0);
    // word 3 never appears
    let absent = TopicSet::new(1, vec![[vec![3], vec![1]]]).unwrap();
    assert_eq!(cnpmi(&absent, &reference).unwrap(), 0.0);
    let mixed = TopicSet::new(2, vec![[vec![0, 2], vec![0, 2]]]).unwrap();
    assert_eq!(cnpmi_per_topic(&mixed, &reference).unwrap(), vec![-0.25]);
}

#[test]
fn cnpmi_bounded_on_random_references() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let pairs = (0..rng.random_range(1..12))
            .map(|_| {
                let a = (0..6).filter(|_| rng.random::<f64>() < 0.4).collect();
                let b = (0..6).filter(|_| rng.random::<f64>() < 0.4).collect();
                (a, b)
            })
            .collect();
        let reference = AlignedReference::new(pairs).unwrap();
        let topics = TopicSet::new(3, vec![[vec![0, 1, 2], vec![3, 4, 5]], [vec![3, 4, 5], vec![0, 1, 2]]]).unwrap();
        for v in cnpmi_per_topic(&topics, &reference).unwrap() {
            assert!((-1.0..=1.0).contains(&v));
        }
    }
}

#[test]
fn tu_cases() {
    let disjoint = TopicSet::new(2, vec![[vec![0, 1], vec![0, 1]], [vec![2, 3], vec![2, 3]]]).unwrap();
    assert_eq!(topic_uniqueness(&disjoint), 1.0);
    let dup = TopicSet::new(2, vec![[vec![0, 1], vec![0, 1]], [vec![0, 1], vec![0, 1]]]).unwrap();
    assert_eq!(topic_uniqueness(&dup), 0.5);
    let single = TopicSet::new(3, vec![[vec![0, 1, 2], vec![4, 5, 6]]]).unwrap();
    assert_eq!(topic_uniqueness(&single), 1.0);
    // language-1 index 0 and language-2 index 0 are different words
    let cross = TopicSet::new(1, vec![[vec![0], vec![1]], [vec![1], vec![0]]]).unwrap();
    assert_eq!(topic_uniqueness(&cross), 1.0);
}

#[test]
fn tu_invariant_under_reordering() {
    let a = TopicSet::new(3, vec![[vec![0, 1, 2], vec![0, 5, 6]], [vec![2, 3, 4], vec![6, 7, 8]], [vec![0, 9, 3], vec![1, 2, 3]]]).unwrap();
    let b = TopicSet::new(3, vec![[vec![3, 0, 9], vec![2, 3, 1]], [vec![2, 1, 0], vec![6, 0, 5]], [vec![4, 2, 3], vec![8, 6, 7]]]).unwrap();
    assert!((topic_uniqueness(&a) - topic_uniqueness(&b)).abs() < 1e-15);
}

#[test]
fn tu_word_modes() {
    let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    let lists = vec![[s(&["a", "b"]), s(&["x", "y"])], [s(&["c", "d"]), s(&["a", "z"])]];
    assert_eq!(topic_uniqueness_words(&lists, TuMode::PerLanguage), 1.0);
    // "a" is listed by both topics once pooled
    assert_eq!(topic_uniqueness_words(&lists, TuMode::Pooled), 0.875);
}

#[test]
fn tq_values() {
    assert_eq!(topic_quality(-0.013, 0.192), 0.0);
    assert!((topic_quality(0.058, 0.958) - 0.056).abs() < 5e-4);
    assert_eq!(topic_quality(0.0, 0.7), 0.0);
    let r = MetricReport::new(vec![0.1, -0.3], 0.8);
    assert_eq!(r.tq, topic_quality(r.cnpmi, r.tu));
}

#[test]
fn classify_separable_and_self() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for i in 0..80 {
        let c = i % 2;
        let centre = if c == 0 { [0.8, 0.1, 0.1] } else { [0.1, 0.1, 0.8] };
        rows.push(centre.iter().map(|x| x + rng.random_range(-0.05..0.05)).collect::<Vec<f64>>());
        labels.push(c);
    }
    let x = Matrix::from_rows(&rows);
    let acc = classify(&x, &labels, &x, &labels, &SvmConfig::default()).unwrap();
    assert_eq!(acc, 1.0);
}

#[test]
fn classify_multiclass() {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for i in 0..90 {
        let c = i % 3;
        let mut r = vec![0.05; 3];
        r[c] = 0.9;
        r[(c + 1) % 3] += (i as f64 * 0.37).sin() * 0.04;
        rows.push(r);
        labels.push(c);
    }
    let x = Matrix::from_rows(&rows);
    assert_eq!(classify(&x, &labels, &x, &labels, &SvmConfig::default()).unwrap(), 1.0);
}

#[test]
fn classify_random_labels_is_chance() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let make = |n: usize, rng: &mut ChaCha8Rng| {
        let x = Matrix::from_fn(n, 4, |_, _| rng.random::<f64>());
        let y: Vec<usize> = (0..n).map(|i| i % 2).collect();
        (x, y)
    };
    let (xt, yt) = make(400, &mut rng);
    let (xs, ys) = make(1000, &mut rng);
    let acc = classify(&xt, &yt, &xs, &ys, &SvmConfig::default()).unwrap();
    assert!((acc - 0.5).abs() < 0.05, "{acc}");
}

#[test]
fn classify_is_deterministic() {
    let x = Matrix::from_fn(30, 2, |i, j| ((i * 7 + j * 3) as f64).sin());
    let y: Vec<usize> = (0..30).map(|i| (i * 5 % 3) % 2).collect();
    let a = LinearSvm::fit(&x, &y, &SvmConfig::default()).unwrap();
    let b = LinearSvm::fit(&x, &y, &SvmConfig::default()).unwrap();
    assert_eq!(a, b);
}

fn planted() -> (PlantedTruth, Vocabulary, Vocabulary) {
    let w = |p: char, t: usize, i: usize| alloc::format!("{p}{t}{i}");
    let topics = [0, 1].map(|l| {
        let p = if l == 0 { 'e' } else { 'f' };
        (0..4).map(|t| (0..3).map(|i| w(p, t, i)).collect()).collect::<Vec<Vec<String>>>()
    });
    let translation = (0..4).flat_map(|t| (0..3).map(move |i| (w('e', t, i), w('f', t, i)))).collect();
    let v1: Vec<String> = topics[0].iter().flatten().cloned().collect();
    let v2: Vec<String> = topics[1].iter().flatten().cloned().collect();
    let truth = PlantedTruth { topics, translation };
    (truth, Vocabulary::from_tokens(Language::L1, v1).unwrap(), Vocabulary::from_tokens(Language::L2, v2).unwrap())
}

#[test]
fn planted_exact_match() {
    let (truth, v1, v2) = planted();
    let lists: Vec<[Vec<String>; 2]> = (0..4).map(|t| [truth.topics[0][t].clone(), truth.topics[1][t].clone()]).collect();
    let topics = TopicSet::from_words(&lists, [&v1, &v2]).unwrap();
    let m = match_planted_topics(&topics, [&v1, &v2], &truth).unwrap();
    assert_eq!(m.alignment_accuracy, 1.0);
    assert_eq!(m.joint_assignment, vec![Some(0), Some(1), Some(2), Some(3)]);
}

#[test]
fn planted_half_permuted() {
    let (truth, v1, v2) = planted();
    let k = 4;
    // swap the language-2 lists of topics 1 and 2
    let perm = [0, 2, 1, 3];
    let lists: Vec<[Vec<String>; 2]> =
        (0..k).map(|t| [truth.topics[0][t].clone(), truth.topics[1][perm[t]].clone()]).collect();
    let topics = TopicSet::from_words(&lists, [&v1, &v2]).unwrap();
    let m = match_planted_topics(&topics, [&v1, &v2], &truth).unwrap();
    assert!(m.alignment_accuracy <= (k as f64 - 2.0) / k as f64);
    assert_eq!(m.alignment_accuracy, 0.5);
    // cyclic shift: no fixed points
    let lists: Vec<[Vec<String>; 2]> =
        (0..k).map(|t| [truth.topics[0][t].clone(), truth.topics[1][(t + 1) % k].clone()]).collect();
    let topics = TopicSet::from_words(&lists, [&v1, &v2]).unwrap();
    assert_eq!(match_planted_topics(&topics, [&v1, &v2], &truth).unwrap().alignment_accuracy, 0.0);
}

#[test]
fn single_topic_accuracy_is_binary() {
    let (truth, v1, v2) = planted();
    let lists = vec![[truth.topics[0][2].clone(), truth.topics[1][2].clone()]];
    let topics = TopicSet::from_words(&lists, [&v1, &v2]).unwrap();
    let acc = match_planted_topics(&topics, [&v1, &v2], &truth).unwrap().alignment_accuracy;
    assert!(acc == 0.0 || acc == 1.0);
}

#[test]
fn holdout_split_is_deterministic() {
    let (train, test) = holdout_split(10, 0.2);
    assert_eq!(test, vec![4, 9]);
    assert_eq!(train.len(), 8);
}

#[test]
fn stats_helpers() {
    assert_eq!(mean(&[1.0, 2.0, 3.0]), 2.0);
    assert!((std_dev(&[1.0, 2.0, 3.0]) - 1.0).abs() < 1e-15);
    assert_eq!(std_dev(&[4.0]), 0.0);
}
