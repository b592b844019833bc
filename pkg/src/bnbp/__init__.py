"""Beta-negative binomial processes: random measure simulation, conjugate
updates, growth asymptotics, and an admixture model with MCMC inference."""

from importlib import metadata as _metadata

try:
    __version__ = _metadata.version("artifact")
except _metadata.PackageNotFoundError:  # running from a source tree
    __version__ = "0.0.0+unknown"
