"""Space-time discretizations of the stochastic 2D Navier-Stokes equations on the torus."""

__version__ = "0.1.0"
