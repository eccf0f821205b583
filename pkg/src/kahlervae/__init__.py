"""Kahler geometry of complex VAE latent spaces.

Library layers, roughly bottom-up:

- ``linalg``     Hermitian kernel (factorizations, log-dets, eigen bounds)
- ``cgaussian``  circular complex normal: density, sampling, KL, moments
- ``wirtinger``  finite-difference Wirtinger Jacobians and mixed Hessians
- ``fisher``     exact complex Fisher metric + MC / KL-Hessian oracles
- ``kahler``     mixture potential, induced metric, proxies, Ricci, PSH
- ``cvae``       small complex VAE with hand-rolled real-surrogate backprop
- ``sampler``    metric-scored overdraw sampling and volume densities
- ``ingest``     IDX / CIFAR-10 parsing, synthetic corpora, downsampling
- ``experiments``  the runnable experiment harness behind the CLI
"""

__version__ = "0.1.0"
