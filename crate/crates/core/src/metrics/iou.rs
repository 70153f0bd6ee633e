use crate::model::BoundingBox;
use std::collections::BTreeMap;

/// Ground-truth boxes of one role by frame, and the role's predicted box.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RoleBoxes {
    pub gt: BTreeMap<usize, BoundingBox>,
    pub pred: Option<(usize, BoundingBox)>,
}

/// IoU of the predicted box with the ground-truth box of the same frame.
/// `None` when the role has no ground truth; a missing prediction or a frame
/// without ground truth counts as 0.
pub fn role_iou(r: &RoleBoxes) -> Option<f64> {
    if r.gt.is_empty() {
        return None;
    }
    Some(match r.pred {
        Some((frame, b)) => r.gt.get(&frame).map_or(0.0, |g| g.iou(&b)),
        None => 0.0,
    })
}

/// Fraction of IoUs at or above `theta`; `None` for no roles.
pub fn iou_at_theta(ious: &[f64], theta: f64) -> Option<f64> {
    if ious.is_empty() {
        return None;
    }
    Some(ious.iter().filter(|&&v| v >= theta).count() as f64 / ious.len() as f64)
}
