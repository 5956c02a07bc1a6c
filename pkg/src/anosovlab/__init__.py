"""anosovlab: a numerical laboratory for geodesic-flow hyperbolicity on
closed surfaces — beta-Jacobi cocycles, terminator values, Fourier analysis
on the unit sphere bundle, geodesic ray transforms, and invariant
distributions with prescribed modes."""

__version__ = "0.1.0"
