import json
from collections import namedtuple
from pathlib import Path

from .a2sconv import InnerOp, OuterOp
from ..exception import GenotypeParseException

NUM_BLOCKS = 6
FINGERPRINT_KEYS = ('bands', 'num_classes', 'patch_size', 'stem_channels')


class Genotype(namedtuple('Genotype', 'choices fingerprint')):
    """
    Discrete architecture: one (OuterOp, InnerOp) choice per block, in block order, plus the
    fingerprint (bands, num_classes, patch_size, stem_channels) of the network it was derived from.
    """

    def __new__(cls, choices, fingerprint):
        return super().__new__(cls, tuple(tuple(c) for c in choices), dict(fingerprint))

    def occupancy(self):
        """
        Fractions of blocks that use asymmetric pooling.

        :rtype: dict
        :returns: 'asymmetric' (any pooling), 'spectral' and 'spatial' fractions
        """
        outers = [outer for outer, _ in self.choices]
        n = len(outers)
        spectral = sum(o is OuterOp.SPECTRAL_POOL for o in outers)
        spatial = sum(o is OuterOp.SPATIAL_POOL for o in outers)
        return {
            'asymmetric': (spectral + spatial) / n,
            'spectral': spectral / n,
            'spatial': spatial / n,
        }

    def to_document(self):
        return {
            'blocks': [{'outer': outer.token, 'inner': inner.token} for outer, inner in self.choices],
            'fingerprint': {key: int(self.fingerprint[key]) for key in FINGERPRINT_KEYS},
        }

    def dumps(self):
        """
        Serializes the genotype as a canonical JSON document (sorted keys, 2-space indent, trailing newline).

        :rtype: str
        """
        return json.dumps(self.to_document(), indent=2, sort_keys=True) + '\n'

    def __str__(self):
        return ', '.join(f"{outer.token}/{inner.token}" for outer, inner in self.choices)


def _variant(enum_class, token, position):
    if not isinstance(token, str):
        raise GenotypeParseException(f"expected a variant name, got {token!r}", position)
    try:
        return enum_class.from_token(token)
    except KeyError:
        known = ', '.join(op.token for op in enum_class)
        raise GenotypeParseException(f"unknown variant '{token}' (expected one of {known})", position) from None


def parse_choices(text):
    """
    Parses the one-line form written by str(Genotype), e.g. "no_pool/k3d1, spatial_pool/k5d2, ...".

    :raise: GenotypeParseException with the position of the first problem

    :rtype: [(OuterOp, InnerOp)]
    """
    items = [item.strip() for item in str(text).split(',')]
    if len(items) != NUM_BLOCKS:
        raise GenotypeParseException(f"expected {NUM_BLOCKS} blocks, got {len(items)}", "choices")
    choices = []
    for i, item in enumerate(items):
        outer, separator, inner = item.partition('/')
        if not separator:
            raise GenotypeParseException(f"expected 'outer/inner', got {item!r}", f"choices[{i}]")
        choices.append((_variant(OuterOp, outer, f"choices[{i}].outer"),
                        _variant(InnerOp, inner, f"choices[{i}].inner")))
    return choices


def loads(text):
    """
    Parses a genotype document.

    :type text: str
    :param text: JSON document as written by Genotype.dumps()

    :raise: GenotypeParseException with the position of the first problem

    :rtype: Genotype
    """
    try:
        document = json.loads(text)
    except json.JSONDecodeError as e:
        raise GenotypeParseException(f"invalid JSON: {e.msg}", f"line {e.lineno} column {e.colno}") from None
    if not isinstance(document, dict):
        raise GenotypeParseException("expected an object", "document")

    blocks = document.get('blocks')
    if not isinstance(blocks, list):
        raise GenotypeParseException("missing 'blocks' array", "blocks")
    if len(blocks) != NUM_BLOCKS:
        raise GenotypeParseException(f"expected {NUM_BLOCKS} blocks, got {len(blocks)}", "blocks")

    choices = []
    for i, block in enumerate(blocks):
        if not isinstance(block, dict):
            raise GenotypeParseException("expected an object", f"blocks[{i}]")
        unknown = sorted(set(block) - {'outer', 'inner'})
        if unknown:
            raise GenotypeParseException(f"unexpected key '{unknown[0]}'", f"blocks[{i}]")
        outer = _variant(OuterOp, block.get('outer'), f"blocks[{i}].outer")
        inner = _variant(InnerOp, block.get('inner'), f"blocks[{i}].inner")
        choices.append((outer, inner))

    fingerprint = document.get('fingerprint')
    if not isinstance(fingerprint, dict):
        raise GenotypeParseException("missing 'fingerprint' object", "fingerprint")
    for key in FINGERPRINT_KEYS:
        value = fingerprint.get(key)
        if isinstance(value, bool) or not isinstance(value, int) or value < 1:
            raise GenotypeParseException(f"expected a positive integer, got {value!r}", f"fingerprint.{key}")
    return Genotype(choices, {key: fingerprint[key] for key in FINGERPRINT_KEYS})


def save_genotype(genotype, path):
    Path(path).write_text(genotype.dumps(), encoding='utf-8')


def load_genotype(path):
    return loads(Path(path).read_text(encoding='utf-8'))
