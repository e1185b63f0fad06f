"""Symmetry analysis, exact solutions and numerical checks for the eikonal
equation ``u_mu u_mu = c`` with Minkowski contraction.

Submodules:

* ``algebra``: exact multivariate polynomials with rational coefficients.
* ``symmetry``: prolongation, symmetry tests, operator catalogs, flows.
* ``solutions``: rank-parameterised envelope solutions and residuals.
* ``transforms``: Legendre and hodograph transforms on grids.
* ``fmm``: fast marching for the Euclidean equation.
* ``cli``: command-line front end.
"""

__version__ = "0.1.0"
