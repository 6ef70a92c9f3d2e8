"""refsift: iterative citation snowballing for systematic literature reviews.

The package is organized around a single-file review store (`store`), pluggable
bibliographic sources (`sources`), the snowball iteration engine (`snowball`),
automated metadata screening (`metascreen`), venue ranking assistance
(`venues`), the multi-rater screening protocol (`screening`), and LLM-assisted
analysis of the final article set (`analysis`). `cli` and `api` expose the
whole pipeline as subcommands and as a local HTTP service.
"""

__version__ = "0.1.0"
