//! Oracles shared by the integration tests.
#![allow(dead_code)]

use offset_core::datagen::{Demographic, Demographics, LogRecord};
use offset_core::layout::IndexLayout;
use offset_core::{FeatureSchema, Model, UserProfile};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A unit-scale random model with K in {2, 3, 4}, a profile and a variant.
pub fn random_config(seed: u64) -> (Model, UserProfile, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.gen_range(2..=4);
    let s = rng.gen_range(0..=3);
    let o = rng.gen_range(1..=3);
    let cards: Vec<usize> = (0..k).map(|_| rng.gen_range(1..=4)).collect();
    let schema = FeatureSchema::with_cardinalities(&cards).unwrap();
    let layout = IndexLayout::build(k, s, o, rng.gen()).unwrap();
    let variants = rng.gen_range(1..=5);
    let mut model = Model::random(schema, layout, variants, 0.1, rng.gen()).unwrap();
    for j in 0..k {
        model.feature_family_mut(j).iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
    }
    model.variant_family_mut().iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
    let profile = UserProfile::new(cards.iter().map(|&c| rng.gen_range(0..c as u32)).collect());
    let variant = rng.gen_range(0..variants);
    (model, profile, variant)
}

/// Central differences of the score with respect to the variant vector and
/// each of the profile's feature value vectors.
pub fn finite_difference(model: &Model, profile: &UserProfile, variant: usize, h: f64) -> (Vec<f64>, Vec<Vec<f64>>) {
    let score = |m: &Model| m.score(profile, variant).unwrap();
    let mut m = model.clone();
    let dim = model.layout().total_dim();
    let mut item = vec![0.0; dim];
    for (i, g) in item.iter_mut().enumerate() {
        let x = m.variant_vector(variant).unwrap()[i];
        m.variant_vector_mut(variant).unwrap()[i] = x + h;
        let up = score(&m);
        m.variant_vector_mut(variant).unwrap()[i] = x - h;
        let down = score(&m);
        m.variant_vector_mut(variant).unwrap()[i] = x;
        *g = (up - down) / (2.0 * h);
    }
    let d = model.layout().feature_dim();
    let mut features = Vec::new();
    for (j, &value) in profile.values().iter().enumerate() {
        let mut g = vec![0.0; d];
        for (p, gp) in g.iter_mut().enumerate() {
            let x = m.feature_vector(j, value).unwrap()[p];
            m.feature_vector_mut(j, value).unwrap()[p] = x + h;
            let up = score(&m);
            m.feature_vector_mut(j, value).unwrap()[p] = x - h;
            let down = score(&m);
            m.feature_vector_mut(j, value).unwrap()[p] = x;
            *gp = (up - down) / (2.0 * h);
        }
        features.push(g);
    }
    (item, features)
}

/// `|a - b| / max(|a|, |b|)` over whole vectors; 0 when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

/// Every parameter the observation touches, flattened: the variant vector,
/// then the profile's feature value vectors in feature order.
pub fn touched_parameters(model: &Model, profile: &UserProfile, variant: usize) -> Vec<f64> {
    let mut out = model.variant_vector(variant).unwrap().to_vec();
    for (j, &value) in profile.values().iter().enumerate() {
        out.extend_from_slice(model.feature_vector(j, value).unwrap());
    }
    out
}

/// Groups users by which variant the small audiences favour: 0 for the
/// (1980s, NY) and (1950s, AZ) audiences, 1 for (1950s, NY) and (1980s, AZ),
/// 2 for California, 3 for everyone else.
pub fn profile_class(demo: &Demographics, user: &Demographic) -> usize {
    let ny = demo.geo_id("NY").unwrap();
    let az = demo.geo_id("AZ").unwrap();
    let ca = demo.geo_id("CA").unwrap();
    let fifties = (1950..=1959).contains(&user.birth_year);
    let eighties = (1980..=1989).contains(&user.birth_year);
    match (user.geo, fifties, eighties) {
        (g, false, true) if g == ny => 0,
        (g, true, false) if g == az => 0,
        (g, true, false) if g == ny => 1,
        (g, false, true) if g == az => 1,
        (g, _, _) if g == ca => 2,
        _ => 3,
    }
}

/// Chi-square statistic of observed clicks against the exact expected
/// clicks in each (profile class, variant) cell. Each observation's click is
/// Bernoulli with its own true CTR, so a cell's click count has mean
/// `sum p` and variance `sum p (1 - p)`.
pub fn click_chi_square<I, F>(records: I, num_variants: usize, demo: &Demographics, ctr: F) -> (f64, usize)
where
    I: IntoIterator<Item = LogRecord>,
    F: Fn(&Demographic, usize) -> f64,
{
    let cells = 4 * num_variants;
    let mut observed = vec![0.0; cells];
    let mut mean = vec![0.0; cells];
    let mut var = vec![0.0; cells];
    for r in records {
        let cell = profile_class(demo, &r.user) * num_variants + r.variant;
        let p = ctr(&r.user, r.variant);
        observed[cell] += f64::from(u8::from(r.click));
        mean[cell] += p;
        var[cell] += p * (1.0 - p);
    }
    let stat = (0..cells)
        .filter(|&c| var[c] > 0.0)
        .map(|c| (observed[c] - mean[c]).powi(2) / var[c])
        .sum();
    (stat, cells)
}

/// Feature j's slots in slot order: standalone block, then one overlap block
/// per other feature in ascending order.
pub fn expected_feature_slots(layout: &IndexLayout, j: usize) -> Vec<usize> {
    let mut slots = layout.standalone_slots(j).to_vec();
    for other in (0..layout.num_features()).filter(|&o| o != j) {
        let (a, b) = if j < other { (j, other) } else { (other, j) };
        slots.extend_from_slice(layout.pair_slots(a, b));
    }
    slots
}

/// Element-wise product of explicitly extended feature vectors.
pub fn brute_user_vector(model: &Model, profile: &UserProfile) -> Vec<f64> {
    let layout = model.layout();
    let mut out = vec![1.0; layout.total_dim()];
    for (j, &value) in profile.values().iter().enumerate() {
        let v = model.feature_vector(j, value).unwrap();
        let mut extended = vec![1.0; layout.total_dim()];
        for (pos, &idx) in expected_feature_slots(layout, j).iter().enumerate() {
            extended[idx] = v[pos];
        }
        for (o, e) in out.iter_mut().zip(&extended) {
            *o *= e;
        }
    }
    out
}
