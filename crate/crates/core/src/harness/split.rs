use crate::error::{Error, Result};

/// Contiguous train / validation / test blocks of date-sorted items. Train
/// and validation sizes round down; test takes the remainder.
pub fn split_chronological<T>(items: Vec<T>, fractions: [f64; 3]) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    let n = items.len();
    // the small slack keeps 0.7 * 10 from flooring to 6
    let take = |f: f64| ((n as f64) * f + 1e-9).floor() as usize;
    let n_train = take(fractions[0]).min(n);
    let n_val = take(fractions[1]).min(n - n_train);
    let mut rest = items;
    let test = rest.split_off(n_train + n_val);
    let val = rest.split_off(n_train);
    if rest.is_empty() || val.is_empty() || test.is_empty() {
        return Err(Error::Config(format!(
            "{n} instances split into {}/{}/{}; every split needs at least one",
            rest.len(),
            val.len(),
            test.len()
        )));
    }
    Ok((rest, val, test))
}
