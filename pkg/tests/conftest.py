import numpy as np
import pytest

from latefuse.corpus import Document
from latefuse.store import EmbeddingStore
from latefuse.train import FusionDataset


def make_store(ids, matrix, kind="text", normalized=False):
    m = np.asarray(matrix, dtype=np.float32)
    return EmbeddingStore(dim=m.shape[1], kind=kind, normalized=normalized,
                          ids=list(ids), matrix=m)


def make_synthetic_dataset(n_docs, d, seed, text_dominant=True, noise=0.05):
    """Separable fixture: queries are noised copies of whichever modality
    carries the signal; the other modality is independent noise."""
    rng = np.random.default_rng(seed)
    signal = rng.normal(size=(n_docs, d))
    noise_mat = rng.normal(size=(n_docs, d))
    queries = signal + noise * rng.normal(size=(n_docs, d))
    text = signal if text_dominant else noise_mat
    img = noise_mat if text_dominant else signal
    ids = [f"doc{i:04d}" for i in range(n_docs)]
    return FusionDataset(dim=d, doc_ids=ids, text=text, img=img,
                         query_ids=ids, query_vecs=queries,
                         pairs=[(i, i) for i in range(n_docs)])


GARBLED_RUN = "!!@@##$$%%^^&&**(("   # 18 consecutive special characters


def make_fixture_corpus():
    """20 documents; 16 pass the default policy (whitespace tokenizer,
    min_tokens=300), 4 violate one rule each."""
    long_text = " ".join(f"word{i}" for i in range(400))
    docs = []
    for i in range(16):
        docs.append(Document(
            id=f"ok{i:02d}", domain=["wiki", "arxiv", "slide"][i % 3],
            texts=[long_text, "a clean closing paragraph"],
            images=[f"img/ok{i:02d}.png"], queries=[f"what is topic {i}?"]))
    docs.append(Document(id="noimg", domain="wiki", texts=[long_text],
                         images=[], queries=["q"]))
    docs.append(Document(id="short", domain="wiki",
                         texts=[" ".join(f"w{i}" for i in range(299))],
                         images=["img/short.png"], queries=["q"]))
    docs.append(Document(id="garbled", domain="slide",
                         texts=[long_text, GARBLED_RUN, GARBLED_RUN + "xx",
                                GARBLED_RUN * 2],
                         images=["img/garbled.png"], queries=["q"]))
    docs.append(Document(id="short2", domain="arxiv",
                         texts=["tiny $x+y$ fragment"],
                         images=["img/short2.png"], queries=["q"]))
    return docs


@pytest.fixture
def fixture_corpus():
    return make_fixture_corpus()
