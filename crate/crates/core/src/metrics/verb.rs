/// Fraction of events whose top-`k` predicted verbs hit any ground-truth
/// verb. Events without ground truth are skipped; `None` when no event is
/// left.
pub fn verb_accuracy<S: AsRef<str>, T: AsRef<str>>(
    pred_ranked: &[Vec<S>],
    gt: &[Vec<T>],
    k: usize,
) -> Option<f64> {
    let k = k.max(1);
    let (mut hits, mut events) = (0usize, 0usize);
    for (i, truth) in gt.iter().enumerate() {
        if truth.is_empty() {
            log::warn!("event {i} has no ground-truth verb; excluded from accuracy");
            continue;
        }
        events += 1;
        let top = pred_ranked.get(i).map_or(&[][..], |p| &p[..p.len().min(k)]);
        if top
            .iter()
            .any(|v| truth.iter().any(|t| t.as_ref() == v.as_ref()))
        {
            hits += 1;
        }
    }
    (events > 0).then(|| hits as f64 / events as f64)
}
