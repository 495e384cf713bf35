//! Dataset ingestion, landmark-based face normalization and train/val splitting.
//!
//! Images are 8-bit binary PGM files under `root/<identity>/<image>.pgm`.
//! Landmark files hold one `relative/path x1 y1 .. x5 y5` record per line.

mod align;
mod dataset;
mod pgm;

pub use align::{align_face, align_face_with, fit_similarity, warp, AlignTarget, Landmarks5, Point, Similarity};
pub use dataset::{
    load_dataset, parse_landmarks, read_landmarks, split_labels, split_train_val, DatasetIndex, FaceDataset,
    FaceSample, SampleRef, Split,
};
pub use pgm::{decode_pgm, encode_pgm, read_pgm, write_pgm, GrayImage};
