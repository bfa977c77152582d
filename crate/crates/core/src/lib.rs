//! Multi-frame LiDAR accumulation by rigid scene decomposition.
//!
//! A sequence of T sweeps is collapsed into the first frame by estimating
//! one rigid ego motion per source frame plus one rigid motion per moving
//! object: pillarized BEV features are matched with an entropic assignment
//! solver to recover ego motion, moving points are segmented and clustered
//! into instances across frames, each instance is aligned to its
//! target-frame observation, and the per-point flow is composed from the
//! rigid pieces. A simulator, file formats, evaluation metrics, and the
//! training losses of the underlying model round out the toolkit.
//!
//! The math core ([`geom`], [`losses`], the solver in [`matcher`]) is
//! generic over [`scalar::Scalar`] (f32/f64); the aliases below pin the
//! `f64` instantiation the pipeline uses.

pub mod assoc;
pub mod config;
pub mod frame;
pub mod geom;
pub mod grid;
pub mod gt;
pub mod io;
pub mod losses;
pub mod matcher;
pub mod metrics;
pub mod objmotion;
pub mod pipeline;
pub mod scalar;
pub mod segmenter;
pub mod sim;
pub mod spatial;

/// Scalar type of the concrete pipeline.
pub type Real = f64;
pub type Vec3 = geom::Vector3<Real>;
pub type Mat3 = geom::Mat3<Real>;
pub type Quat = geom::Quaternion<Real>;
pub type RigidTransform = geom::RigidTransform<Real>;

pub use frame::{compose_scene_flow, FlowField, Frame, FrameSequence, ObjectMotionSet};
