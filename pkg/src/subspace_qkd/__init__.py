"""Monte Carlo toolkit for QKD in the two-qubit subspace {|01>, |10>} under
collective random-unitary channel noise."""

__version__ = "0.1.0"
