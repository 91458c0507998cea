"""
Attribute value generation and completion parsing

A generator turns a PromptBundle into raw completion text with one
"Attribute: value" line per attribute. parse_completion maps that text to
one outcome per attribute: a value (flagged OOD when outside the
taxonomy), Null ("None") or Unknown.
"""

import re
import math

from collections import namedtuple, OrderedDict
from concurrent.futures import ThreadPoolExecutor

from valuerag.corpus import render_query
from valuerag.embedding import EmbeddingError
from valuerag.log import Logger
from valuerag.promptgen import PromptError, assemble_prompt, candidate_values, corrupt_shot_labels
from valuerag.request import JSONRequest, JSONRequestError, DEFAULT_MAX_ATTEMPTS, DEFAULT_TIMEOUT, \
    DEFAULT_MAX_IN_FLIGHT
from valuerag.retrieval import RetrievalError
from valuerag.taxonomy import NULL_MARKER, TaxonomyError, canonical

OUTCOME_VALUE = 'value'
OUTCOME_NULL = 'null'
OUTCOME_UNKNOWN = 'unknown'
UNKNOWN_TOKEN = 'unknown'
MOCK_MODES = ('oracle', 'heuristic', 'top1')

LINE_PATTERN = re.compile(r'^\s*(?:[-*]\s+)?(?P<name>[^:：]+?)\s*[:：]\s*(?P<value>.*?)\s*$')


class GenerationError(Exception):
    def __str__(self):
        return self.args[0]


class EmptyChoicesError(GenerationError):
    pass


class MalformedCompletionError(GenerationError):
    pass


class PromptTooLongError(GenerationError):
    pass


class StageError(GenerationError):
    """
    Failure of one pipeline stage for one product
    """
    def __init__(self, stage, product_id, error):
        GenerationError.__init__(self, 'stage %s failed for product %s: %s' % (stage, product_id, error))
        self.stage = stage
        self.product_id = product_id
        self.error = error


class Outcome(namedtuple('Outcome', ['kind', 'value', 'ood'])):
    """
    Per-attribute prediction outcome
    """
    __slots__ = ()

    @classmethod
    def of_value(cls, value, ood):
        return cls(OUTCOME_VALUE, value, ood)

    @classmethod
    def null(cls):
        return cls(OUTCOME_NULL, None, False)

    @classmethod
    def unknown(cls):
        return cls(OUTCOME_UNKNOWN, None, False)

    @property
    def predicted_empty(self):
        return self.kind != OUTCOME_VALUE

    def to_record(self):
        record = OrderedDict([('outcome', self.kind)])
        if self.kind == OUTCOME_VALUE:
            record['value'] = self.value
            record['ood'] = self.ood
        return record

    @classmethod
    def from_record(cls, record):
        kind = record.get('outcome')
        if kind == OUTCOME_VALUE:
            return cls.of_value(record['value'], bool(record.get('ood', False)))
        if kind == OUTCOME_NULL:
            return cls.null()
        if kind == OUTCOME_UNKNOWN:
            return cls.unknown()
        raise GenerationError('Unknown outcome %r' % kind)


class ParseDiagnostics(object):
    def __init__(self):
        self.skipped = []
        self.duplicates = 0
        self.missing = []

    def __repr__(self):
        return '<ParseDiagnostics %d skipped, %d duplicates, %d missing>' % (
            len(self.skipped), self.duplicates, len(self.missing)
        )

    def to_record(self):
        return OrderedDict((
            ('skipped_lines', len(self.skipped)),
            ('duplicate_lines', self.duplicates),
            ('missing_attributes', list(self.missing)),
        ))


class Prediction(object):
    """
    One outcome per attribute of the product's category schema
    """
    def __init__(self, product_id, category, outcomes, diagnostics=None):
        self.product_id = product_id
        self.category = category
        self.outcomes = OrderedDict(outcomes)
        self.diagnostics = diagnostics or ParseDiagnostics()

    def __eq__(self, other):
        if not isinstance(other, Prediction):
            return NotImplemented
        return (self.product_id, self.category, list(self.outcomes.items())) == \
            (other.product_id, other.category, list(other.outcomes.items()))

    def __ne__(self, other):
        result = self.__eq__(other)
        return result if result is NotImplemented else not result

    def __repr__(self):
        return '<Prediction %s %s>' % (self.product_id, dict(self.outcomes))

    def to_record(self, trace_ref=None):
        record = OrderedDict((
            ('product_id', self.product_id),
            ('category', self.category),
            ('predictions', OrderedDict((a, o.to_record()) for a, o in self.outcomes.items())),
            ('diagnostics', self.diagnostics.to_record()),
        ))
        if trace_ref is not None:
            record['trace_ref'] = trace_ref
        return record

    @classmethod
    def from_record(cls, record):
        outcomes = OrderedDict(
            (attribute, Outcome.from_record(value)) for attribute, value in record['predictions'].items()
        )
        return cls(record['product_id'], record.get('category'), outcomes)


def parse_completion(raw, schema, taxonomy, category):
    """
    Parse a completion into a Prediction; never fails

    Attribute names match case-insensitively; lines that do not parse or
    name no schema attribute are skipped and counted. The first line per
    attribute wins.
    """
    if not schema:
        raise GenerationError('Empty attribute schema for %s' % category)
    names = dict((canonical(attribute).casefold(), attribute) for attribute in schema)
    found = OrderedDict((attribute, None) for attribute in schema)
    diagnostics = ParseDiagnostics()

    for line in (raw or '').splitlines():
        if not line.strip():
            continue
        match = LINE_PATTERN.match(line)
        attribute = match and names.get(canonical(match.group('name')).casefold())
        value = match and canonical(match.group('value'))
        if not attribute or not value:
            diagnostics.skipped.append(line)
            continue
        if found[attribute] is not None:
            diagnostics.duplicates += 1
            continue
        if value == NULL_MARKER:
            found[attribute] = Outcome.null()
        elif value.casefold() == UNKNOWN_TOKEN:
            found[attribute] = Outcome.unknown()
        else:
            found[attribute] = Outcome.of_value(value, not taxonomy.contains(category, attribute, value))

    for attribute, outcome in found.items():
        if outcome is None:
            diagnostics.missing.append(attribute)
            found[attribute] = Outcome.unknown()

    return Prediction(None, category, found, diagnostics)


class Generator(object):
    """
    Generator contract: generate(bundle) returns completion text
    """
    identity = None

    def generate(self, bundle):
        raise NotImplementedError


class MockGenerator(Generator):
    """
    Deterministic stand-in generators

    oracle     ground-truth value when it is among the candidates, else None
    heuristic  first candidate occurring verbatim in the product text, else first candidate
    top1       first candidate, the value retrieval baseline
    """
    def __init__(self, mode='heuristic'):
        if mode not in MOCK_MODES:
            raise GenerationError('Unknown mock generator mode %s' % mode)
        self.mode = mode
        self.identity = 'mock-%s' % mode

    def __repr__(self):
        return self.identity

    def answer(self, product, attribute, values):
        if self.mode == 'oracle':
            truth = product.ground_truth(attribute)
            if truth is None:
                return UNKNOWN_TOKEN
            for value in values:
                if value in truth:
                    return value
            return NULL_MARKER

        if self.mode == 'heuristic':
            text = render_query(product)
            for value in values:
                if value != NULL_MARKER and value in text:
                    return value
        return values and values[0] or NULL_MARKER

    def generate(self, bundle):
        if bundle.provenance is None:
            raise GenerationError('%s needs an assembled prompt bundle' % self.identity)
        product, shots, candidates = bundle.provenance
        return '\n'.join(
            '%s: %s' % (attribute, self.answer(product, attribute, candidate_values(values)))
            for attribute, values in candidates.items()
        )


def mock_generate(bundle, mode='heuristic'):
    return MockGenerator(mode).generate(bundle)


class RemoteGenerator(Generator):
    """
    Chat-completion endpoint client

        request  {"model", "messages": [{"role", "content"}], "temperature", "max_tokens"}
        response {"choices": [{"message": {"content"}}]}
    """
    def __init__(self, url, model, token_env=None, temperature=0.0, max_tokens=256,
                 max_prompt_chars=32000, timeout=DEFAULT_TIMEOUT, attempts=DEFAULT_MAX_ATTEMPTS,
                 max_in_flight=DEFAULT_MAX_IN_FLIGHT, session=None):
        self.log = Logger('generation').default_stream
        self.model = model
        self.temperature = temperature
        self.max_tokens = max_tokens
        self.max_prompt_chars = max_prompt_chars
        self.identity = 'remote:%s@%s' % (model, url)
        self.request = JSONRequest(
            url,
            token_env=token_env,
            attempts=attempts,
            timeout=timeout,
            max_in_flight=max_in_flight,
            stage='generation',
            session=session,
        )

    def __repr__(self):
        return self.identity

    def generate(self, bundle):
        prompt = bundle.rendered
        if len(prompt) > self.max_prompt_chars:
            raise PromptTooLongError('Prompt has %d characters, limit is %d' % (len(prompt), self.max_prompt_chars))

        data = self.request.post({
            'model': self.model,
            'messages': [{'role': 'user', 'content': prompt}],
            'temperature': self.temperature,
            'max_tokens': self.max_tokens,
        })
        choices = data.get('choices')
        if not isinstance(choices, list):
            raise MalformedCompletionError('%s response has no choices list' % self.identity)
        if not choices:
            raise EmptyChoicesError('%s returned zero choices' % self.identity)
        message = choices[0].get('message') if isinstance(choices[0], dict) else None
        content = isinstance(message, dict) and message.get('content') or None
        if not isinstance(content, str):
            raise MalformedCompletionError('%s returned a choice without text content' % self.identity)
        return content


def remote_generate(bundle, endpoint, session=None):
    return generator_from_config(dict(endpoint, kind='remote'), session=session).generate(bundle)


def generator_from_config(section, session=None):
    """
    Build a generator from a validated [generator] section
    """
    kind = section.get('kind', 'mock-oracle')
    if kind.startswith('mock-'):
        return MockGenerator(kind[len('mock-'):])
    return RemoteGenerator(
        url=section['url'],
        model=section['model'],
        token_env=section.get('token_env'),
        temperature=section.get('temperature', 0.0),
        max_tokens=section.get('max_tokens', 256),
        max_prompt_chars=section.get('max_prompt_chars', 32000),
        timeout=section.get('timeout', DEFAULT_TIMEOUT),
        attempts=section.get('attempts', DEFAULT_MAX_ATTEMPTS),
        max_in_flight=section.get('max_in_flight', DEFAULT_MAX_IN_FLIGHT),
        session=session,
    )


def trace_score(score):
    return score if math.isfinite(score) else None


def retrieval_trace(product, candidates, shots):
    """
    Candidates with scores and reference labels used for one product
    """
    return OrderedDict((
        ('product_id', product.id),
        ('candidates', OrderedDict(
            (attribute, [[c.value, trace_score(c.score)] for c in values.candidates])
            for attribute, values in candidates.items()
        )),
        ('shots', [
            OrderedDict((('id', shot.product.id), ('labels', shot.rendered_labels))) for shot in shots
        ]),
    ))


def check_trace(record):
    """
    Validate a trace record read back from a traces file
    """
    product_id = record.get('product_id')
    if not isinstance(product_id, str) or not product_id:
        raise GenerationError('trace has no product_id')
    candidates = record.get('candidates')
    if not isinstance(candidates, dict):
        raise GenerationError('trace %s has no candidates object' % product_id)
    for attribute, pairs in candidates.items():
        if not isinstance(pairs, list) or not all(
            isinstance(pair, list) and len(pair) == 2 and isinstance(pair[0], str) for pair in pairs
        ):
            raise GenerationError('trace %s candidates of %s are not [value, score] pairs' % (product_id, attribute))
    shots = record.get('shots')
    if not isinstance(shots, list) or not all(
        isinstance(shot, dict) and isinstance(shot.get('labels'), dict) for shot in shots
    ):
        raise GenerationError('trace %s has no list of labeled shots' % product_id)
    return record


STAGE_ERRORS = (RetrievalError, EmbeddingError, JSONRequestError, PromptError, GenerationError, TaxonomyError)


class Pipeline(object):
    """
    retrieve -> assemble prompt -> generate -> parse, for one product at a time
    """
    def __init__(self, taxonomy, retriever, generator, template=None, shot_noise=0.0, concurrency=1):
        self.log = Logger('generation').default_stream
        self.taxonomy = taxonomy
        self.retriever = retriever
        self.generator = generator
        self.template = template
        self.shot_noise = shot_noise
        self.concurrency = concurrency

    def __stage__(self, stage, product, callback, *args):
        try:
            return callback(*args)
        except STAGE_ERRORS as emsg:
            raise StageError(stage, product.id, emsg)

    def predict(self, product):
        """
        Prediction and trace record for one product
        """
        candidates, shots = self.__stage__('retrieve', product, self.retriever.retrieve, product)
        if self.shot_noise:
            shots = corrupt_shot_labels(shots, self.shot_noise, self.taxonomy)
        bundle = self.__stage__(
            'prompt', product, assemble_prompt, product, shots, candidates, self.taxonomy, self.template
        )
        raw = self.__stage__('generate', product, self.generator.generate, bundle)
        if not isinstance(raw, str):
            raise StageError('generate', product.id, 'generator returned %s' % type(raw).__name__)

        schema = self.taxonomy.attribute_set(product.category)
        prediction = parse_completion(raw, schema, self.taxonomy, product.category)
        prediction.product_id = product.id
        if prediction.diagnostics.skipped or prediction.diagnostics.missing:
            self.log.info('product %s: %d completion lines skipped, missing %s' % (
                product.id, len(prediction.diagnostics.skipped), ', '.join(prediction.diagnostics.missing) or '-'
            ))

        trace = retrieval_trace(product, candidates, shots)
        trace['completion'] = raw
        return prediction, trace

    def predict_batch(self, products):
        """
        Predict products concurrently; results keep input order
        """
        products = list(products)
        with ThreadPoolExecutor(max_workers=max(1, self.concurrency)) as pool:
            results = list(pool.map(self.predict, products))
        self.log.info('predicted %d products with %s' % (len(results), self.generator.identity))
        return results


def predict(product, pipeline):
    return pipeline.predict(product)
