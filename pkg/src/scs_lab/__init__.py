"""Statistical compressed sensing with Gaussian and Gaussian-mixture priors.

Submodules:

* gaussian_models: priors, spectra, sampling, mixture containers
* sensing:        measurement-matrix families and application
* decoder:        linear MAP decoding and piecewise mixture decoding
* approximation:  best k-term linear/nonlinear baselines
* analysis:       Monte Carlo bound constants and model-selection studies
* map_em:         hard-assignment EM over compressed measurements
* imaging:        PGM I/O, patch plumbing, image sense/decode pipelines
* cli:            the `scs-lab` command-line harness

Kept import-light on purpose; import the submodules you need.
"""

__version__ = "0.1.0"
