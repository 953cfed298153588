"""Self-supervised monocular depth estimation for endoscopy-like scenes.

Two training phases: (1) a latent autoencoder plus a temporal-conditioned
diffusion model produce aligned latent features of the current frame;
(2) a depth decoder, pose network, and brightness-calibration networks
turn those features into metric depth via warping-based view synthesis.
"""

__version__ = "0.1.0"
