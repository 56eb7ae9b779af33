"""
qcfold builds quasiregular interpolations of Eremenko-Lyubich model functions
by quasiconformal folding, and audits every stage numerically.

.. _numpy: https://numpy.org
.. _trio: https://trio.readthedocs.io

The construction is split into stages, one module each:

 - the hyperbolic disk toolkit (harmonic measure, geodesic top points)
 - model domains made of logarithmic tracts and their boundary partitions
 - a discrete Riemann map from the complement of the tracts onto the disk
 - a Blaschke product whose zeros are chosen from a separated net of arcs
 - the strip interpolation, alignment and folding maps
 - the glued quasiregular map and its dilatation audits
 - escaping dynamics of the model and the pullback conjugacy

   **NB:** Everything is vectorised with numpy_; the audits run on worker
   threads from a Trio_ nursery.
"""
