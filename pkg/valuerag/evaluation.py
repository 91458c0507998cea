"""
Micro-averaged evaluation of attribute value predictions

Every annotated (product, attribute) pair is one instance and lands in one
confusion cell:

    ground truth empty,     predicted empty      TN
    ground truth empty,     predicted value      FP
    ground truth non-empty, value in truth       TP
    ground truth non-empty, predicted empty      FN
    ground truth non-empty, value not in truth   FP and FN (mismatch)

Null and Unknown outcomes both count as a predicted empty set.
"""

import io
import csv
import hashlib

from collections import namedtuple, OrderedDict

from valuerag.files import atomic_write
from valuerag.generation import Outcome, StageError
from valuerag.log import Logger
from valuerag.taxonomy import NULL_MARKER

TP = 'tp'
FP = 'fp'
FN = 'fn'
TN = 'tn'
MISMATCH = 'mismatch'
CELLS = (TP, FP, FN, TN, MISMATCH)
METRICS = ('precision', 'recall', 'f1', 'coverage')
SWEEP_PARAMS = ('k', 'm')
SWEEP_HEADER = ('param', 'coverage', 'precision', 'recall', 'f1')

EvalInstance = namedtuple('EvalInstance', [
    'product_id', 'attribute', 'ground_truth', 'outcome', 'candidates', 'shot_values'
])
SweepPoint = namedtuple('SweepPoint', ['param', 'coverage', 'precision', 'recall', 'f1'])


class EvaluationError(Exception):
    def __str__(self):
        return self.args[0]


class UniverseMismatchError(EvaluationError):
    pass


class SweepError(EvaluationError):
    pass


def instance(product_id, attribute, ground_truth, outcome, candidates=None, shot_values=None):
    return EvalInstance(
        product_id,
        attribute,
        frozenset(ground_truth),
        outcome,
        None if candidates is None else tuple(candidates),
        None if shot_values is None else frozenset(shot_values),
    )


class ConfusionCounts(object):
    def __init__(self, tp=0, fp=0, fn=0, tn=0):
        self.tp = tp
        self.fp = fp
        self.fn = fn
        self.tn = tn

    def __eq__(self, other):
        if not isinstance(other, ConfusionCounts):
            return NotImplemented
        return self.as_tuple() == other.as_tuple()

    def __ne__(self, other):
        result = self.__eq__(other)
        return result if result is NotImplemented else not result

    def __add__(self, other):
        return ConfusionCounts(*[a + b for a, b in zip(self.as_tuple(), other.as_tuple())])

    def __repr__(self):
        return '<ConfusionCounts tp=%d fp=%d fn=%d tn=%d>' % self.as_tuple()

    def as_tuple(self):
        return (self.tp, self.fp, self.fn, self.tn)

    def add(self, cell):
        if cell == MISMATCH:
            self.fp += 1
            self.fn += 1
        elif cell in (TP, FP, FN, TN):
            setattr(self, cell, getattr(self, cell) + 1)
        else:
            raise EvaluationError('Unknown confusion cell %s' % cell)

    def scores(self):
        """
        (precision, recall, f1) with 0 for zero denominators
        """
        precision = self.tp + self.fp and self.tp / float(self.tp + self.fp) or 0.0
        recall = self.tp + self.fn and self.tp / float(self.tp + self.fn) or 0.0
        f1 = self.tp and 2 * self.tp / float(2 * self.tp + self.fp + self.fn) or 0.0
        return precision, recall, f1

    def to_record(self):
        return OrderedDict(zip((TP, FP, FN, TN), self.as_tuple()))

    @classmethod
    def from_record(cls, record):
        return cls(record[TP], record[FP], record[FN], record[TN])


def classify_instance(ground_truth, outcome):
    """
    Confusion cell of one instance; outcome None means predicted empty
    """
    predicted_empty = outcome is None or outcome.predicted_empty
    if not ground_truth:
        return predicted_empty and TN or FP
    if predicted_empty:
        return FN
    return outcome.value in ground_truth and TP or MISMATCH


class EvalReport(object):
    """
    Aggregated counts, micro scores, coverage and diagnostics
    """
    def __init__(self, counts, instance_count, coverage=None, diagnostics=None, universe=None):
        self.counts = counts
        self.instance_count = instance_count
        self.precision, self.recall, self.f1 = counts.scores()
        self.coverage = coverage
        self.diagnostics = diagnostics or OrderedDict()
        self.universe = universe

    def __repr__(self):
        return '<EvalReport P=%.4f R=%.4f F1=%.4f n=%d>' % (
            self.precision, self.recall, self.f1, self.instance_count
        )

    def to_record(self):
        return OrderedDict((
            ('instance_count', self.instance_count),
            ('counts', self.counts.to_record()),
            ('precision', self.precision),
            ('recall', self.recall),
            ('f1', self.f1),
            ('coverage', self.coverage),
            ('universe', self.universe),
            ('diagnostics', self.diagnostics),
        ))

    @classmethod
    def from_record(cls, record):
        try:
            return cls(
                ConfusionCounts.from_record(record['counts']),
                record['instance_count'],
                coverage=record.get('coverage'),
                diagnostics=record.get('diagnostics'),
                universe=record.get('universe'),
            )
        except (KeyError, TypeError) as emsg:
            raise EvaluationError('Not an evaluation report: missing %s' % emsg)


def universe_digest(instances):
    keys = sorted('%s\t%s' % (i.product_id, i.attribute) for i in instances)
    return hashlib.sha256('\n'.join(keys).encode('utf-8')).hexdigest()


def covered(item):
    return bool(item.ground_truth.intersection(v for v in item.candidates if v != NULL_MARKER))


def coverage(instances):
    """
    Share of non-empty ground-truth instances whose candidates hit the truth
    """
    relevant = [i for i in instances if i.ground_truth]
    if not relevant:
        raise EvaluationError('Coverage needs instances with non-empty ground truth')
    for item in relevant:
        if item.candidates is None:
            raise EvaluationError('Instance %s/%s has no candidate set' % (item.product_id, item.attribute))
    return sum(1 for i in relevant if covered(i)) / float(len(relevant))


def shot_coverage(instances):
    """
    Share of non-empty ground-truth instances whose reference product labels
    contain a ground-truth value
    """
    relevant = [i for i in instances if i.ground_truth]
    if not relevant:
        raise EvaluationError('Coverage needs instances with non-empty ground truth')
    hits = 0
    for item in relevant:
        if item.shot_values is None:
            raise EvaluationError('Instance %s/%s has no reference labels' % (item.product_id, item.attribute))
        if item.ground_truth.intersection(item.shot_values):
            hits += 1
    return hits / float(len(relevant))


def micro_scores(instances):
    """
    Sum confusion cells over all instances, then score
    """
    instances = list(instances)
    if not instances:
        raise EvaluationError('No instances to evaluate')

    counts = ConfusionCounts()
    cells = OrderedDict((cell, 0) for cell in CELLS)
    per_attribute = OrderedDict()
    outcomes = OrderedDict((('null', 0), ('unknown', 0), ('value', 0)))
    ood_predictions = 0
    ood_tp = 0

    for item in instances:
        cell = classify_instance(item.ground_truth, item.outcome)
        counts.add(cell)
        cells[cell] += 1
        per_attribute.setdefault(item.attribute, ConfusionCounts()).add(cell)
        outcome = item.outcome or Outcome.unknown()
        outcomes[outcome.kind] += 1
        if outcome.kind == 'value' and outcome.ood:
            ood_predictions += 1
            if cell == TP:
                ood_tp += 1

    value_coverage = None
    if all(i.candidates is not None for i in instances) and any(i.ground_truth for i in instances):
        value_coverage = coverage(instances)

    diagnostics = OrderedDict((
        ('cells', cells),
        ('outcomes', outcomes),
        ('ood_predictions', ood_predictions),
        ('ood_tp', ood_tp),
        ('per_attribute', OrderedDict(
            (attribute, attribute_counts.to_record()) for attribute, attribute_counts in per_attribute.items()
        )),
    ))
    return EvalReport(counts, len(instances), value_coverage, diagnostics, universe_digest(instances))


def split_by_coverage(instances):
    """
    Reports for non-empty ground-truth instances whose candidates cover the
    truth and for those whose candidates miss it; None for an empty side
    """
    relevant = [i for i in instances if i.ground_truth and i.candidates is not None]
    hits = [i for i in relevant if covered(i)]
    misses = [i for i in relevant if not covered(i)]
    return (hits and micro_scores(hits) or None, misses and micro_scores(misses) or None)


def build_instances(products, predictions, traces=None):
    """
    Join ground truth with predictions and retrieval traces

    predictions and traces map product id to Prediction / trace record.
    Unannotated attributes are skipped.
    """
    instances = []
    for product in products:
        prediction = predictions.get(product.id)
        if prediction is None:
            raise EvaluationError('No prediction for product %s' % product.id)
        trace = traces is not None and traces.get(product.id) or None
        if traces is not None and trace is None:
            raise EvaluationError('No retrieval trace for product %s' % product.id)

        for attribute in product.labels:
            candidates = shot_values = None
            if trace is not None:
                candidates = [
                    value for value, score in trace['candidates'].get(attribute, []) if value != NULL_MARKER
                ]
                shot_values = [
                    shot['labels'][attribute] for shot in trace['shots']
                    if shot['labels'].get(attribute, NULL_MARKER) != NULL_MARKER
                ]
            instances.append(instance(
                product.id,
                attribute,
                product.ground_truth(attribute),
                prediction.outcomes.get(attribute, Outcome.unknown()),
                candidates,
                shot_values,
            ))
    return instances


def compare_reports(a, b):
    """
    Signed per-metric deltas b - a over the same instance universe
    """
    if a.instance_count != b.instance_count:
        raise UniverseMismatchError('Reports cover %d and %d instances' % (a.instance_count, b.instance_count))
    if a.universe and b.universe and a.universe != b.universe:
        raise UniverseMismatchError('Reports cover different (product, attribute) instances')

    deltas = OrderedDict()
    for metric in METRICS:
        va = getattr(a, metric)
        vb = getattr(b, metric)
        if va is not None and vb is not None:
            deltas[metric] = vb - va
        elif va is None and vb is None:
            deltas[metric] = None
        else:
            raise EvaluationError('Only one report has %s' % metric)
    for cell, va, vb in zip((TP, FP, FN, TN), a.counts.as_tuple(), b.counts.as_tuple()):
        deltas[cell] = vb - va
    return deltas


def resolve_sweep_values(values, limit=None):
    """
    Ascending, de-duplicated integers; 'all' resolves to limit
    """
    resolved = set()
    for value in values:
        if isinstance(value, str) and value.strip().lower() == 'all':
            if limit is None:
                raise SweepError('Sweep value "all" needs a limit')
            value = limit
        try:
            resolved.add(int(value))
        except (TypeError, ValueError):
            raise SweepError('Invalid sweep value %r' % (value,))
    if not resolved:
        raise SweepError('No sweep values')
    return sorted(resolved)


def sweep(param, values, make_pipeline, products):
    """
    Run the full pipeline once per swept value of k or m

    make_pipeline(**{param: value}) returns a generation.Pipeline. The
    coverage column is candidate coverage for k and reference-label
    coverage for m.
    """
    log = Logger('evaluation').default_stream
    if param not in SWEEP_PARAMS:
        raise SweepError('Can only sweep %s, not %s' % (' or '.join(SWEEP_PARAMS), param))
    values = list(values)
    if values != sorted(set(values)):
        raise SweepError('Sweep values must be ascending and unique: %s' % values)

    points = []
    for value in values:
        try:
            results = make_pipeline(**{param: value}).predict_batch(products)
            predictions = dict((p.product_id, p) for p, trace in results)
            traces = dict((trace['product_id'], trace) for p, trace in results)
            instances = build_instances(products, predictions, traces)
            report = micro_scores(instances)
            if param == 'k':
                swept_coverage = coverage(instances)
            else:
                swept_coverage = shot_coverage(instances)
        except (EvaluationError, StageError) as emsg:
            raise SweepError('%s=%s: %s' % (param, value, emsg))
        log.info('%s=%s coverage=%.4f f1=%.4f' % (param, value, swept_coverage, report.f1))
        points.append(SweepPoint(value, swept_coverage, report.precision, report.recall, report.f1))
    return points


def sweep_csv(points):
    out = io.StringIO()
    writer = csv.writer(out, lineterminator='\n')
    writer.writerow(SWEEP_HEADER)
    for point in points:
        writer.writerow([repr(field) for field in point])
    return out.getvalue()


def write_sweep_csv(points, path):
    return atomic_write(path, sweep_csv(points))


def read_sweep_csv(path):
    with io.open(path, 'r', encoding='utf-8', newline='') as fd:
        reader = csv.reader(fd)
        header = next(reader, None)
        if tuple(header or ()) != SWEEP_HEADER:
            raise EvaluationError('%s is not a sweep file' % path)
        return [
            SweepPoint(int(row[0]), float(row[1]), float(row[2]), float(row[3]), float(row[4]))
            for row in reader if row
        ]


def format_report(report):
    """
    Human readable summary lines
    """
    lines = [
        'instances  %d' % report.instance_count,
        'tp %d  fp %d  fn %d  tn %d' % report.counts.as_tuple(),
        'precision  %.4f' % report.precision,
        'recall     %.4f' % report.recall,
        'f1         %.4f' % report.f1,
    ]
    if report.coverage is not None:
        lines.append('coverage   %.4f' % report.coverage)
    return '\n'.join(lines)
