//! Quadrilateral geometry, label assignment, evaluation metrics and
//! text-aided product matching for retail shelf images.

pub mod assignment;
pub mod dataset;
pub mod detection_eval;
pub mod error;
pub mod geometry;
pub mod matching;
pub mod text_eval;

pub use assignment::{assign_targets, soft_scale, AssignmentTarget, PyramidSpec, SoftScale};
pub use detection_eval::{evaluate, g_map, quad_nms, DetectionRecord, EvalResult, GroundTruthRecord};
pub use error::{Error, Result};
pub use geometry::{quad_iou, Point2D, Polygon, QuadBox};
pub use matching::{
    hungarian, match_product, text_similarity, top1_accuracy, tune_params, FeatureSequence, Gallery, GalleryEntry,
    MatchConfig, QueryRecord, WordFeature,
};
pub use text_eval::{TextRegion, Vocabulary};
