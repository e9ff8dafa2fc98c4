"""Factor-graph visual tracking with oriented differentiable patches.

Submodules:
    geom      SE(2) pose arithmetic (exp/log, composition, Mahalanobis norms)
    imaging   gray images, bilinear sampling with gradients, PGM I/O
    warp      oriented-patch extraction and pose-gradient pullback
    encoders  random-projection, PPCA, and autoencoder feature encoders
    densities Gaussian foreground/background models over feature space
    factors   motion/appearance/likelihood factors and trajectory energies
    tracker   sample-then-refine tracking loop and training pipeline
    metrics   oriented-box IoU, accuracy, robustness, expected average overlap
    synth     deterministic synthetic benchmark generator
    dataset   on-disk dataset layout and track CSV I/O
    cli       command-line interface
"""

__version__ = "0.1.0"
