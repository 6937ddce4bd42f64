//! Inspection tools: spectral profiles of feature maps, filter images and
//! layer similarity.

mod cka;
mod profile;
mod viridis;
mod viz;

pub use cka::{gram, hsic_unbiased, linear_cka, CkaAccumulator, CkaResult};
pub use profile::{log_amplitude_profile, profiles_csv, SpectrumProfile, AMPLITUDE_FLOOR};
pub use viridis::VIRIDIS;
pub use viz::{filter_ppm, visualize_filter, visualize_filter_width};
