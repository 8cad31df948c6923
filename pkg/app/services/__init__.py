"""Service layer: filtering, compression design, baselines and experiment drivers.

Import from the submodules directly; the models import ``app.services.base``
and an eager re-export here would make that import circular.
"""
