import os

# keep the tests hermetic: everything runs against a locally built checkpoint
os.environ.setdefault("HF_HUB_OFFLINE", "1")
os.environ.setdefault("TRANSFORMERS_OFFLINE", "1")

import pytest
import torch


@pytest.fixture(scope="session")
def tiny_model_dir(tmp_path_factory):
    """A randomly initialized BERT-class checkpoint small enough for CI,
    saved with a matching WordPiece tokenizer."""
    from transformers import BertConfig, BertModel, BertTokenizerFast

    out = tmp_path_factory.mktemp("tiny-bert")
    vocab = (
        ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
        + list("abcdefghijklmnopqrstuvwxyz")
        + ["the", "cat", "sat", "on", "mat", "a", "dog", "ran", "fast", "##s", "."]
    )
    vocab_file = out / "vocab.txt"
    vocab_file.write_text("\n".join(vocab) + "\n")

    config = BertConfig(
        vocab_size=len(vocab),
        hidden_size=16,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=32,
        max_position_embeddings=24,
    )
    torch.manual_seed(1234)
    model = BertModel(config)
    model.save_pretrained(out)
    tokenizer = BertTokenizerFast(vocab_file=str(vocab_file), do_lower_case=True)
    tokenizer.save_pretrained(out)
    return str(out)


@pytest.fixture()
def corpus_file(tmp_path):
    path = tmp_path / "corpus.txt"
    path.write_text("the cat sat on the mat .\n\na dog ran fast .\nthe dog sat .\n")
    return str(path)
