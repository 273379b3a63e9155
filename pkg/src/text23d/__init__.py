"""text23d: desk-scale text-to-3D object generation.

Two stages: an autoregressive text-to-views generator over discrete image
tokens, and an image-conditioned radiance field that turns the generated
views into a renderable 3D representation.
"""

__version__ = "0.1.0"
