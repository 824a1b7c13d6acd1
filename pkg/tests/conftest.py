import pytest

import mockcorpus


@pytest.fixture(scope="session")
def corpus50():
    """(questions, answers, qrels) for a 50-question three-community corpus."""
    return mockcorpus.build_corpus(n_questions=50, seed=7)


@pytest.fixture()
def corpus_files(tmp_path):
    """Same corpus written to disk; returns {'questions','answers','qrels'} paths."""
    return mockcorpus.write_corpus(tmp_path / "corpus", n_questions=50, seed=7)
