"""Pipeline toolkit for synthesized community-QA answers.

Subpackages cover corpus handling, prompt rendering, LLM generation, BM25 and
neural re-ranking retrieval, IR metrics with significance testing, diversity
analysis, and a hallucination-annotation service. The `synthpqa` command line
drives the stages end to end.
"""

__version__ = "0.1.0"
