import numpy as np
import pytest

from idepnn.corpus import Document, EntityMention, RelationInstance, Sentence, Token, parse_conllu

# Two-sentence example with a hand-written UD-style parse.
ALLEN_CONLLU = """\
# newdoc id = allen
1\tPaul\tPaul\tPROPN\t_\t_\t2\tcompound\t_\tTokenRange=0-4
2\tAllen\tAllen\tPROPN\t_\t_\t4\tnsubj\t_\tTokenRange=5-10
3\thas\thave\tAUX\t_\t_\t4\taux\t_\tTokenRange=11-14
4\tstarted\tstart\tVERB\t_\t_\t0\troot\t_\tTokenRange=15-22
5\ta\ta\tDET\t_\t_\t6\tdet\t_\tTokenRange=23-24
6\tcompany\tcompany\tNOUN\t_\t_\t4\tobj\t_\tTokenRange=25-32
7\tand\tand\tCCONJ\t_\t_\t8\tcc\t_\tTokenRange=33-36
8\tnamed\tname\tVERB\t_\t_\t4\tconj\t_\tTokenRange=37-42
9\tVern\tVern\tPROPN\t_\t_\t10\tcompound\t_\tTokenRange=43-47
10\tRaburn\tRaburn\tPROPN\t_\t_\t8\tobj\t_\tTokenRange=48-54
11\tits\tits\tPRON\t_\t_\t12\tnmod:poss\t_\tTokenRange=55-58
12\tPresident\tpresident\tNOUN\t_\t_\t8\txcomp\t_\tTokenRange=59-68
13\t.\t.\tPUNCT\t_\t_\t4\tpunct\t_\tTokenRange=68-69

1\tThe\tthe\tDET\t_\t_\t2\tdet\t_\tTokenRange=70-73
2\tcompany\tcompany\tNOUN\t_\t_\t12\tnsubj:pass\t_\tTokenRange=74-81
3\t,\t,\tPUNCT\t_\t_\t2\tpunct\t_\tTokenRange=81-82
4\tto\tto\tPART\t_\t_\t6\tmark\t_\tTokenRange=83-85
5\tbe\tbe\tAUX\t_\t_\t6\taux:pass\t_\tTokenRange=86-88
6\tcalled\tcall\tVERB\t_\t_\t2\tacl\t_\tTokenRange=89-95
7\tPaul\tPaul\tPROPN\t_\t_\t9\tcompound\t_\tTokenRange=96-100
8\tAllen\tAllen\tPROPN\t_\t_\t9\tcompound\t_\tTokenRange=101-106
9\tGroup\tGroup\tPROPN\t_\t_\t6\txcomp\t_\tTokenRange=107-112
10\twill\twill\tAUX\t_\t_\t12\taux\t_\tTokenRange=113-117
11\tbe\tbe\tAUX\t_\t_\t12\taux:pass\t_\tTokenRange=118-120
12\tbased\tbase\tVERB\t_\t_\t0\troot\t_\tTokenRange=121-126
13\tin\tin\tADP\t_\t_\t14\tcase\t_\tTokenRange=127-129
14\tBellevue\tBellevue\tPROPN\t_\t_\t12\tobl\t_\tTokenRange=130-138
15\t,\t,\tPUNCT\t_\t_\t16\tpunct\t_\tTokenRange=138-139
16\tWashington\tWashington\tPROPN\t_\t_\t14\tappos\t_\tTokenRange=140-150
17\t.\t.\tPUNCT\t_\t_\t12\tpunct\t_\tTokenRange=150-151
"""

ALLEN_TEXT = (
    "Paul Allen has started a company and named Vern Raburn its President. "
    "The company, to be called Paul Allen Group will be based in Bellevue, Washington."
)


def make_allen_doc() -> Document:
    sentences = parse_conllu(ALLEN_CONLLU)
    mentions = [EntityMention("T1", 0, 9, 10, "Per"), EntityMention("T2", 1, 7, 9, "Org")]
    return Document("allen", sentences, mentions, [RelationInstance("T1", "T2", "Per-Org")], ALLEN_TEXT)


@pytest.fixture
def allen_doc() -> Document:
    return make_allen_doc()


def sentence_from_heads(heads, doc_index=0, forms=None, deprels=None) -> Sentence:
    """Sentence whose token i (1-based) attaches to ``heads[i-1]``."""
    toks = []
    for i, h in enumerate(heads, start=1):
        form = forms[i - 1] if forms else f"t{doc_index}_{i}"
        rel = deprels[i - 1] if deprels else ("root" if h == 0 else "dep")
        toks.append(Token(i, form, "NN", h, rel))
    return Sentence(doc_index, toks)


def doc_from_heads(sent_heads, mentions=(), relations=(), doc_id="d") -> Document:
    sents = [sentence_from_heads(h, i) for i, h in enumerate(sent_heads)]
    return Document(doc_id, sents, list(mentions), list(relations))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
