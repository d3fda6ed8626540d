"""Semi-supervised GAN analysis lab: K+1-class discriminator objectives,
grid-based divergence checks and two small case studies."""

__version__ = "0.1.0"
