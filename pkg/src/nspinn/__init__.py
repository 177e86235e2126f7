"""Physics-informed neural networks for 2D incompressible flow, with
Taylor-Green verification, wake diagnostics and DMD spectral analysis."""

__version__ = "0.1.0"
