//! A seeded copy task: every answer quotes a two-word name made of fresh
//! pseudo-words, and the question must repeat it. Names are unique per
//! example, so a vocabulary built from the frame words alone leaves them
//! out-of-vocabulary and only a copying decoder can reproduce them.

use laqg_data::Example;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{ModelError, Result};

const LEADS: [&str; 4] = ["the report mentions", "an old letter names", "the archive lists", "a later survey cites"];
const FILLERS: [&str; 4] = [
    "nobody disputed the claim",
    "the details were later revised",
    "this was widely reported",
    "several copies still exist",
];
const ASKS: [(&str, &str); 3] = [("person", "who is"), ("place", "where is"), ("thing", "what is")];

/// Every word the generator uses apart from the quoted names.
pub fn frame_words() -> Vec<String> {
    let mut words: Vec<String> = LEADS
        .iter()
        .chain(FILLERS.iter())
        .chain(ASKS.iter().flat_map(|(k, q)| [k, q]))
        .flat_map(|s| s.split(' '))
        .chain(["the", "quote", "unquote", ".", "?"])
        .map(str::to_string)
        .collect();
    words.sort();
    words.dedup();
    words
}

fn pseudo_word(rng: &mut ChaCha8Rng) -> String {
    const C: &[u8] = b"bdfgklmnprstvz";
    const V: &[u8] = b"aeiou";
    let syllables = rng.gen_range(2..4);
    let mut w = String::new();
    for _ in 0..syllables {
        w.push(C[rng.gen_range(0..C.len())] as char);
        w.push(V[rng.gen_range(0..V.len())] as char);
    }
    w.push('x');
    w
}

/// `n` examples; the answer is `<lead> the <kind> quote A B unquote . <filler> .`
/// (sentence order random) and the question `<wh> is A B ?`.
pub fn copy_task(n: usize, seed: u64) -> Result<Vec<Example>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let a = pseudo_word(&mut rng);
        let b = pseudo_word(&mut rng);
        if a == b || !seen.insert(a.clone()) || !seen.insert(b.clone()) {
            continue;
        }
        let (kind, ask) = *ASKS.choose(&mut rng).unwrap();
        let lead = LEADS.choose(&mut rng).unwrap();
        let filler = FILLERS.choose(&mut rng).unwrap();
        let quoted = format!("{lead} the {kind} quote {a} {b} unquote .");
        let other = format!("{filler} .");
        let answer = if rng.gen_bool(0.5) {
            format!("{quoted} {other}")
        } else {
            format!("{other} {quoted}")
        };
        let question = format!("{ask} {a} {b} ?");
        let split = |s: &str| s.split(' ').map(str::to_string).collect::<Vec<_>>();
        let ex = Example::new(format!("copy-{:03}", out.len()), split(&answer), split(&question))
            .map_err(|e| ModelError::Data(e.to_string()))?;
        out.push(ex);
    }
    Ok(out)
}

/// Position-wise token accuracy, pooled over the corpus: matches at equal
/// positions divided by the total reference length.
pub fn token_accuracy<H: AsRef<[String]>, R: AsRef<[String]>>(pairs: &[(H, R)]) -> f64 {
    let mut hits = 0usize;
    let mut total = 0usize;
    for (h, r) in pairs {
        let (h, r) = (h.as_ref(), r.as_ref());
        total += r.len();
        hits += h.iter().zip(r).filter(|(a, b)| a == b).count();
    }
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique_and_outside_the_frame() {
        let ex = copy_task(200, 3).unwrap();
        let frame = frame_words();
        let mut names = std::collections::HashSet::new();
        for e in &ex {
            let name = &e.question[2..4];
            assert!(name.iter().all(|w| !frame.contains(w)));
            assert!(e.answer.windows(2).any(|w| w == name));
            for w in name {
                assert!(names.insert(w.clone()));
            }
            assert!(e.answer.iter().chain(&e.question).all(|w| frame.contains(w) || name.contains(w)));
        }
        assert_eq!(copy_task(200, 3).unwrap(), ex);
    }

    #[test]
    fn accuracy_is_positional() {
        let s = |x: &str| x.split(' ').map(str::to_string).collect::<Vec<_>>();
        let pairs = vec![(s("who is a b ?"), s("who is a c ?")), (s("x"), s("y z"))];
        assert!((token_accuracy(&pairs) - 4.0 / 7.0).abs() < 1e-12);
    }
}
