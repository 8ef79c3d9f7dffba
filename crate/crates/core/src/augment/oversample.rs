use rand::Rng;

use crate::error::{Error, Result};
use crate::grade::Grade;

/// Bootstrap oversampling: every item is kept once and the minority class
/// is topped up with draws (with replacement) from its own members until
/// both classes have the same count. Extras follow the originals.
pub fn bootstrap_oversample<T, R, F>(items: &[T], grade_of: F, rng: &mut R) -> Result<Vec<T>>
where
    T: Clone,
    R: Rng + ?Sized,
    F: Fn(&T) -> Grade,
{
    let (kl0, kl2): (Vec<usize>, Vec<usize>) = (0..items.len()).partition(|&i| grade_of(&items[i]) == Grade::Kl0);
    if kl0.is_empty() || kl2.is_empty() {
        return Err(Error::invalid("oversampling needs both classes present"));
    }
    let (minority, deficit) = if kl0.len() < kl2.len() {
        (&kl0, kl2.len() - kl0.len())
    } else {
        (&kl2, kl0.len() - kl2.len())
    };
    let mut out = items.to_vec();
    out.extend((0..deficit).map(|_| items[minority[rng.gen_range(0..minority.len())]].clone()));
    Ok(out)
}
