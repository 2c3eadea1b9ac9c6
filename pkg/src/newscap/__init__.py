"""Entity-aware news captioning at desk scale.

Two-stage pipeline: generate template captions with typed entity
placeholders from an image-feature grid and an attended article encoding,
then fill the placeholders with named entities drawn from the article.
"""

__version__ = "0.1.0"
