//! Generator and discriminator/classifier architectures.
//!
//! Two families, both scalable by `base_width` and `image_size`:
//! - a conv generator (down 2x, residual blocks, up 2x, tanh head) with an
//!   optional attention/color-mask head, and
//! - a PatchGAN conv discriminator or a ResNet discriminator with global
//!   mean pooling, each with a realness head and a domain-classifier head
//!   on a shared trunk.

mod classifier;
mod condition;
mod discriminator;
mod generator;

pub use classifier::{SmallCnn, SmallCnnConfig};
pub use condition::{condition_concat, one_hot_planes, Conditioning};
pub use discriminator::{DiscArch, Discriminator, DiscriminatorConfig, DiscriminatorOutput};
pub use generator::{AttentionOutput, GenOutput, Generator, GeneratorConfig};

#[cfg(test)]
mod tests;
