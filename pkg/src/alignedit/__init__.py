"""alignedit: edit-instruction alignment and dataset refinement at desk scale."""

__version__ = "0.1.0"
