"""Digital-twin scene representations for surgical phase recognition.

Subpackages: frame data model and file format (``frames``), synthetic scene
generator (``synth``), photometric corruption suite (``corrupt``), autodiff
engine (``nn``), phase-recognition models (``model``), training/evaluation
(``training``, ``metrics``), and the ``dtspr`` command line (``cli``).
"""

__version__ = "0.1.0"
