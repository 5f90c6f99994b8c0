pub mod audio;
pub mod autodiff;
pub mod dataset;
pub mod gradcam;
pub mod model;
pub mod training;
