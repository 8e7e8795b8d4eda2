//! Second BLEU implementation, written separately from the library scorer:
//! n-grams as owned vectors in ordered maps, precisions multiplied rather
//! than summed in log space, brevity penalty by cases.

use std::collections::BTreeMap;

fn grams(tokens: &[String], n: usize) -> BTreeMap<Vec<String>, u32> {
    let mut out = BTreeMap::new();
    let mut i = 0;
    while i + n <= tokens.len() {
        *out.entry(tokens[i..i + n].to_vec()).or_insert(0) += 1;
        i += 1;
    }
    out
}

fn clipped(c: &[String], r: &[String], n: usize) -> (u32, u32) {
    let rg = grams(r, n);
    let mut hits = 0;
    let mut total = 0;
    for (g, k) in grams(c, n) {
        total += k;
        hits += k.min(*rg.get(&g).unwrap_or(&0));
    }
    (hits, total)
}

fn penalty(c: usize, r: usize) -> f64 {
    if c >= r {
        1.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    }
}

pub fn sentence(c: &[String], r: &[String]) -> f64 {
    if c.is_empty() {
        return 0.0;
    }
    let mut product = 1.0;
    for n in 1..=4 {
        let (h, t) = clipped(c, r, n);
        product *= if n == 1 {
            h as f64 / t as f64
        } else {
            (h as f64 + 1.0) / (t as f64 + 1.0)
        };
    }
    if product == 0.0 {
        return 0.0;
    }
    penalty(c.len(), r.len()) * product.powf(0.25)
}

pub fn corpus(cs: &[Vec<String>], rs: &[Vec<String>]) -> f64 {
    let mut h = [0u32; 4];
    let mut t = [0u32; 4];
    let mut cl = 0;
    let mut rl = 0;
    for (c, r) in cs.iter().zip(rs) {
        cl += c.len();
        rl += r.len();
        for n in 1..=4 {
            let (a, b) = clipped(c, r, n);
            h[n - 1] += a;
            t[n - 1] += b;
        }
    }
    if cl == 0 {
        return 0.0;
    }
    let mut product = 1.0;
    for n in 0..4 {
        if t[n] == 0 {
            return 0.0;
        }
        product *= h[n] as f64 / t[n] as f64;
    }
    if product == 0.0 {
        return 0.0;
    }
    penalty(cl, rl) * product.powf(0.25)
}

/// Twenty (candidate, reference) pairs covering clipping, short inputs,
/// length mismatch in both directions and partial overlap.
pub const FIXTURE: [(&str, &str); 20] = [
    ("the cat", "the cat sat"),
    ("the food is great", "the food is great"),
    ("a b c d", "e f g h"),
    ("", "the food is bad"),
    ("the the the the", "the cat is on the mat"),
    ("the food is terrible", "the food is great"),
    ("the staff at this hotel is rude", "the staff at this hotel is friendly"),
    ("our waiter was amazing", "our waiter was awful"),
    ("this place in vegas is bad", "this place in vegas is excellent"),
    ("the pizza was delicious and the soup was bland", "the pizza was bland"),
    ("we", "we found the menu perfect"),
    ("found the menu", "we found the menu perfect"),
    ("the menu the menu the menu", "the menu is fine"),
    ("great great great", "great food"),
    ("the bar has horrible coffee", "the bar has wonderful coffee"),
    ("coffee has the bar wonderful", "the bar has wonderful coffee"),
    ("the soup was the soup", "the soup was hot"),
    ("i love it !", "i love it ."),
    ("the room was dirty and the staff was rude", "the room was clean and the staff was friendly"),
    ("x", "x"),
];

pub fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}
