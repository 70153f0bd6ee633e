//! Evaluation metrics.

pub mod cider;
pub mod gied;
pub mod hota;
pub mod hungarian;
pub mod iou;
pub mod lea;
pub mod verb;

pub use cider::{cider, tokenize, CiderScorer};
pub use gied::{gied, match_entities, DEFAULT_IOU_FLOOR};
pub use hota::{alphas, hota, HotaAlpha, HotaScore, Track, TrackSet};
pub use hungarian::{hungarian_match, maximize, Matching};
pub use iou::{iou_at_theta, role_iou, RoleBoxes};
pub use lea::{lea, lea_soft, LeaScore, SoftWeighting};
pub use verb::verb_accuracy;
