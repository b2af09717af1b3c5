"""Lorentzian Epstein surfaces, W-volume and Liouville action on the
split annulus, with crossratio metrics of positive curves.

Modules:

* ``fields``    charts, scalar fields with exact jets, circle maps,
                polygonal lightlike curves, quadrature grids
* ``lorentz``   conformal Lorentz metrics, curvature, d'Alembertian
* ``liouville`` the Liouville action, S-class diagnostics, VB
* ``adsgeom``   signature (2,2) algebra, isotropic surfaces, Epstein
                lifts, fundamental forms at infinity
* ``forms``     differential forms on the unit tangent bundle, the
                numerical exterior derivative and the W-volume
* ``curves``    crossratios, diamond areas, curve families and actions
* ``cli``       the ``splitannulus`` command line tool
"""

from . import adsgeom, curves, fields, forms, liouville, lorentz  # noqa: F401

__version__ = "0.1.0"
