//! Losses, augmentation, loss providers and the training loop.

mod adam;
mod augment;
mod gradcheck;
mod loss;
mod remote;
mod train;

pub use adam::{adamw_step, AdamConfig, AdamW};
pub use augment::{crop_augment, crop_augment_to, resample, resample_backward, Crop, CropWindow, CROP_SIZE};
pub use gradcheck::{check_gradients, probe_weights, ClassCheck, GradCheckConfig};
pub use loss::{cosine_loss, image_target_loss, psnr, LossError, LossOutput, LossProvider, TargetLoss};
pub use remote::{
    decode_response, encode_request, remote_embedding_loss, RawResponse, RemoteClient, RemoteEmbeddingLoss,
    RemoteError, ECHO_PATH, LOSS_PATH, PROTOCOL_VERSION,
};
pub use train::{
    batch_gradient, lr_at, train, train_with, write_log_csv, BackgroundPolicy, CameraConfig, LogRow, Objective,
    TargetView, TrainConfig, TrainError, TrainOutcome, ViewPlan,
};
