"""Inter-sentential relation extraction over dependency paths.

A document's dependency trees are joined root-to-root into one tree; the path
between two entity heads (optionally augmented with each path word's subtree,
encoded recursively) is read by a connectionist bidirectional RNN.
"""

from .corpus import (
    NONE_LABEL,
    CandidatePair,
    CorpusError,
    Document,
    EntityMention,
    RelationInstance,
    RelationSchema,
    Sentence,
    Token,
    corpus_candidates,
    generate_candidates,
    load_jsonl,
    dump_jsonl,
    parse_conllu,
    sample_negatives,
)
from .depgraph import NEXTS, build_adp, build_document_graph, shortest_path
from .evaluation import EvalReport, ensemble, evaluate, threshold_filter
from .model import ModelConfig, TrainedModel
from .serialization import load_model, save_model
from .synthetic import FixtureSpec, generate_corpus, random_tree
from .trainer import grad_check, predict_candidates, train

__version__ = "0.1.0"
