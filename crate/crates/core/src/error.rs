use crate::{
    calibration::CalibrationError, effector::EffectorError, eval::EvalError, geometry::GeometryError,
    image::ImageError, nn::NnError, optim::OptimError, robot::RobotError, tracking::TrackingError,
};

/// Any error raised by this crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Tracking(#[from] TrackingError),
    #[error(transparent)]
    Effector(#[from] EffectorError),
    #[error(transparent)]
    Robot(#[from] RobotError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}
