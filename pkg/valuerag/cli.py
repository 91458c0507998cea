"""
valuerag command line tool

Every command reads one configuration file, writes its outputs to the
configured output directory and finishes with manifest-<command>.json.
"""

import os
import logging
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone

from valuerag.config import ConfigError, load_config
from valuerag.corpus import CorpusError, corpus_stats, ingest_products
from valuerag.embedding import EmbeddingError, encoder_from_config
from valuerag.evaluation import (
    EvalReport, EvaluationError, SWEEP_PARAMS, UniverseMismatchError,
    build_instances, compare_reports, format_report, micro_scores,
    resolve_sweep_values, split_by_coverage, sweep, write_sweep_csv,
)
from valuerag.files import RecordFileError, read_json, read_records, write_json, write_records
from valuerag.generation import (
    GenerationError, Pipeline, Prediction, check_trace, generator_from_config, retrieval_trace,
)
from valuerag.log import ROOT_LOGGER, Logger
from valuerag.promptgen import PromptError, PromptTemplate, default_template, export_sft
from valuerag.request import JSONRequestError
from valuerag.retrieval import (
    RetrievalError, Retriever, SnapshotError,
    build_product_index, build_value_index, load_product_index, load_value_index, save_index,
)
from valuerag.shell import (
    EXIT_CONFIG_ERROR, EXIT_INPUT_ERROR, EXIT_STAGE_FAILURE, Script, ScriptCommand,
)
from valuerag.sqlite import SQLiteError
from valuerag.synth import SynthError, synthesize, write_dataset
from valuerag.taxonomy import TaxonomyError, load_taxonomy

VALUE_INDEX = 'values.index'
PRODUCT_INDEX = 'products.index'
PREDICTIONS = 'predictions.jsonl'
TRACES = 'traces.jsonl'
RETRIEVALS = 'retrievals.jsonl'
REPORT = 'report.json'
SFT = 'sft.jsonl'
DEFAULT_SWEEP_VALUES = '1,2,4,8'

GENERATOR_KINDS = ('mock-oracle', 'mock-heuristic', 'mock-top1', 'remote')
ENCODER_KINDS = ('builtin', 'remote')


def utc_now():
    return datetime.now(timezone.utc).isoformat()


def config_overrides(args):
    """
    Configuration values given as command line flags
    """
    overrides = {
        'k': args.k,
        'm': args.m,
        'seed': args.seed,
        'concurrency': args.concurrency,
        'output': args.out,
        'ood_ratio': getattr(args, 'ood_ratio', None),
        ('generator', 'kind'): args.generator,
    }
    if args.encoder is not None:
        overrides[('value_encoder', 'kind')] = args.encoder
        overrides[('product_encoder', 'kind')] = args.encoder
    return overrides


class PipelineCommand(ScriptCommand):
    """
    Common configuration, file logging and manifest handling

    Subclasses implement execute(args) and return the output file names.
    """
    def run(self, args):
        self.config = load_config(args.config, config_overrides(args))
        self.log = Logger('cli').default_stream
        self.components = OrderedDict()
        self.manifest = 'manifest-%s.json' % self.name

        started = utc_now()
        handler = Logger('cli').register_file_handler('valuerag', self.config.output)
        try:
            self.log.info('%s: config %s hash %s' % (self.name, self.config.path or '(defaults)', self.config.hash))
            outputs = self.execute(args)
            write_json(self.path(self.manifest), OrderedDict((
                ('command', self.name),
                ('config', self.config.path),
                ('config_hash', self.config.hash),
                ('components', self.components),
                ('started', started),
                ('finished', utc_now()),
                ('outputs', list(outputs)),
            )))
        finally:
            logging.getLogger(ROOT_LOGGER).removeHandler(handler)
            handler.close()

    def execute(self, args):
        raise NotImplementedError

    def path(self, filename):
        return os.path.join(self.config.output, filename)

    def stamp(self, record):
        record['manifest'] = self.manifest
        return record

    def prompt_template(self):
        template = self.config.template and PromptTemplate(self.config.template) or default_template()
        self.components['template'] = template.identity
        return template

    def taxonomy(self):
        return load_taxonomy(self.config.taxonomy_path)

    def corpus(self, taxonomy):
        return ingest_products(self.config.corpus_path, taxonomy)

    def pool(self, taxonomy, corpus):
        """
        Reference pool products; the corpus itself when no pool file exists
        """
        if self.config.values['pool_path'] or os.path.isfile(self.config.pool_path):
            return ingest_products(self.config.pool_path, taxonomy)
        self.log.info('no pool file %s, using the corpus as reference pool' % self.config.pool_path)
        return corpus

    def encoder(self, section):
        settings = getattr(self.config, section)
        if settings['kind'] == 'remote':
            self.config.credential(section)
        encoder = encoder_from_config(settings)
        self.components[section] = encoder.identity
        return encoder

    def generator(self):
        if self.config.generator['kind'] == 'remote':
            self.config.credential('generator')
        generator = generator_from_config(self.config.generator)
        self.components['generator'] = generator.identity
        return generator

    def retriever(self, taxonomy, k=None, m=None):
        value_encoder = self.encoder('value_encoder')
        product_encoder = self.encoder('product_encoder')
        value_index = load_value_index(self.path(VALUE_INDEX), value_encoder)
        product_index = load_product_index(self.path(PRODUCT_INDEX), product_encoder, taxonomy)
        return Retriever(
            taxonomy, value_index, product_index, value_encoder, product_encoder,
            self.config.k if k is None else k,
            self.config.m if m is None else m,
        )


class SynthCommand(PipelineCommand):
    def execute(self, args):
        dataset = synthesize(self.config.synth, self.config.seed)
        write_dataset(dataset, self.config.taxonomy_path, self.config.corpus_path, self.config.pool_path)
        self.script.message('%d categories, %d products, %d reference products' % (
            len(dataset.taxonomy.categories), len(dataset.corpus), len(dataset.pool)
        ))
        return [self.config.taxonomy_path, self.config.corpus_path, self.config.pool_path]


class IngestCommand(PipelineCommand):
    def execute(self, args):
        taxonomy = self.taxonomy()
        corpus = self.corpus(taxonomy)
        pool = self.pool(taxonomy, corpus)
        summary = self.stamp(OrderedDict((
            ('categories', len(taxonomy.categories)),
            ('values', taxonomy.value_count),
            ('corpus', corpus_stats(corpus)._asdict()),
            ('pool', corpus_stats(pool)._asdict()),
        )))
        write_json(self.path('ingest.json'), summary)
        self.script.message('%(categories)d categories, %(values)d values' % summary)
        for name in ('corpus', 'pool'):
            self.script.message('%s: %d products, %d labeled pairs, %d null pairs' % (
                name, summary[name]['product_count'], summary[name]['pa_pair_count'], summary[name]['null_pair_count']
            ))
        return ['ingest.json']


class IndexCommand(PipelineCommand):
    def execute(self, args):
        taxonomy = self.taxonomy()
        pool = self.pool(taxonomy, self.corpus(taxonomy))
        value_index = build_value_index(taxonomy, self.encoder('value_encoder'), workers=self.config.concurrency)
        product_index = build_product_index(
            pool, taxonomy, self.encoder('product_encoder'), workers=self.config.concurrency
        )
        save_index(value_index, self.path(VALUE_INDEX))
        save_index(product_index, self.path(PRODUCT_INDEX))
        self.script.message('indexed %d values and %d reference products' % (len(value_index), len(product_index)))
        return [VALUE_INDEX, PRODUCT_INDEX]


class RetrieveCommand(PipelineCommand):
    def execute(self, args):
        taxonomy = self.taxonomy()
        corpus = self.corpus(taxonomy)
        retriever = self.retriever(taxonomy)
        with ThreadPoolExecutor(max_workers=self.config.concurrency) as pool:
            results = list(pool.map(retriever.retrieve, corpus))
        write_records(self.path(RETRIEVALS), [
            self.stamp(retrieval_trace(product, candidates, shots))
            for product, (candidates, shots) in zip(corpus, results)
        ])
        self.log.info('retrieved candidates for %d products with k=%d m=%d' % (
            len(corpus), retriever.k, retriever.m
        ))
        return [RETRIEVALS]


class PredictCommand(PipelineCommand):
    def execute(self, args):
        taxonomy = self.taxonomy()
        corpus = self.corpus(taxonomy)
        pipeline = Pipeline(
            taxonomy, self.retriever(taxonomy), self.generator(),
            template=self.prompt_template(),
            shot_noise=self.config.shot_noise,
            concurrency=self.config.concurrency,
        )
        results = pipeline.predict_batch(corpus)
        write_records(self.path(PREDICTIONS), [
            self.stamp(prediction.to_record(trace_ref='%s:%d' % (TRACES, lineno)))
            for lineno, (prediction, trace) in enumerate(results, 1)
        ])
        write_records(self.path(TRACES), [self.stamp(trace) for prediction, trace in results])
        self.script.message('predicted %d products' % len(results))
        return [PREDICTIONS, TRACES]


class EvaluateCommand(PipelineCommand):
    def add_arguments(self, parser):
        parser.add_argument('--predictions', help='Prediction file (default: output directory)')
        parser.add_argument('--traces', help='Trace file (default: output directory)')

    def execute(self, args):
        taxonomy = self.taxonomy()
        corpus = self.corpus(taxonomy)
        predictions = OrderedDict()
        predictions_path = args.predictions or self.path(PREDICTIONS)
        for lineno, record in read_records(predictions_path):
            try:
                prediction = Prediction.from_record(record)
            except (KeyError, AttributeError, TypeError, GenerationError) as emsg:
                raise RecordFileError('%s line %d: not a prediction: %s' % (predictions_path, lineno, emsg))
            predictions[prediction.product_id] = prediction
        traces = {}
        traces_path = args.traces or self.path(TRACES)
        for lineno, record in read_records(traces_path):
            try:
                check_trace(record)
            except GenerationError as emsg:
                raise RecordFileError('%s line %d: not a trace: %s' % (traces_path, lineno, emsg))
            traces[record['product_id']] = record

        instances = build_instances(corpus, predictions, traces)
        report = micro_scores(instances)
        covered, uncovered = split_by_coverage(instances)
        record = report.to_record()
        record['split_by_coverage'] = OrderedDict((
            ('covered', covered is not None and covered.to_record() or None),
            ('uncovered', uncovered is not None and uncovered.to_record() or None),
        ))
        write_json(self.path(REPORT), self.stamp(record))
        self.script.message(format_report(report))
        return [REPORT]


class SweepCommand(PipelineCommand):
    def add_arguments(self, parser):
        parser.add_argument('--param', choices=SWEEP_PARAMS, required=True, help='Parameter to sweep')
        parser.add_argument('--values', default=DEFAULT_SWEEP_VALUES,
                            help='Comma separated values, "all" for the largest partition')

    def execute(self, args):
        taxonomy = self.taxonomy()
        corpus = self.corpus(taxonomy)
        retriever = self.retriever(taxonomy)
        generator = self.generator()
        template = self.prompt_template()

        if args.param == 'k':
            limit = retriever.value_index.max_partition_size
        else:
            limit = max([len(p) for p in retriever.product_index.partitions.values()] or [0])
        values = resolve_sweep_values(args.values.split(','), limit)

        def make_pipeline(k=None, m=None):
            return Pipeline(
                taxonomy,
                Retriever(
                    taxonomy, retriever.value_index, retriever.product_index,
                    retriever.value_encoder, retriever.product_encoder,
                    self.config.k if k is None else k,
                    self.config.m if m is None else m,
                ),
                generator,
                template=template,
                shot_noise=self.config.shot_noise,
                concurrency=self.config.concurrency,
            )

        points = sweep(args.param, values, make_pipeline, corpus)
        filename = 'sweep_%s.csv' % args.param
        write_sweep_csv(points, self.path(filename))
        for point in points:
            self.script.message('%s=%d coverage %.4f f1 %.4f' % (args.param, point[0], point[1], point[4]))
        return [filename]


class ExportSftCommand(PipelineCommand):
    def add_arguments(self, parser):
        parser.add_argument('--ood-ratio', type=float, help='Share of eligible products with an OOD sample')

    def execute(self, args):
        taxonomy = self.taxonomy()
        corpus = self.corpus(taxonomy)
        records = export_sft(
            corpus, self.retriever(taxonomy), taxonomy,
            ood_ratio=self.config.ood_ratio,
            seed=self.config.seed,
            template=self.prompt_template(),
            shot_noise=self.config.shot_noise,
        )
        write_records(self.path(SFT), [self.stamp(record.to_record()) for record in records])
        self.script.message('exported %d records' % len(records))
        return [SFT]


class CompareCommand(PipelineCommand):
    def add_arguments(self, parser):
        parser.add_argument('report_a', help='Baseline report.json')
        parser.add_argument('report_b', help='Compared report.json')

    def execute(self, args):
        a = EvalReport.from_record(read_json(args.report_a))
        b = EvalReport.from_record(read_json(args.report_b))
        deltas = compare_reports(a, b)
        for name, delta in deltas.items():
            if delta is None:
                self.script.message('%-10s -' % name)
            elif isinstance(delta, int):
                self.script.message('%-10s %+d' % (name, delta))
            else:
                self.script.message('%-10s %+.4f' % (name, delta))
        write_json(self.path('compare.json'), self.stamp(OrderedDict((
            ('report_a', args.report_a),
            ('report_b', args.report_b),
            ('deltas', deltas),
        ))))
        return ['compare.json']


class ValueRAGScript(Script):
    """
    Attribute value identification pipeline
    """
    error_exit_codes = (
        (ConfigError, EXIT_CONFIG_ERROR),
        (SynthError, EXIT_CONFIG_ERROR),
        (TaxonomyError, EXIT_INPUT_ERROR),
        (CorpusError, EXIT_INPUT_ERROR),
        (SnapshotError, EXIT_INPUT_ERROR),
        (RecordFileError, EXIT_INPUT_ERROR),
        (UniverseMismatchError, EXIT_INPUT_ERROR),
        (RetrievalError, EXIT_STAGE_FAILURE),
        (EmbeddingError, EXIT_STAGE_FAILURE),
        (PromptError, EXIT_STAGE_FAILURE),
        (GenerationError, EXIT_STAGE_FAILURE),
        (EvaluationError, EXIT_STAGE_FAILURE),
        (JSONRequestError, EXIT_STAGE_FAILURE),
        (SQLiteError, EXIT_STAGE_FAILURE),
    )

    def __init__(self):
        super(ValueRAGScript, self).__init__(
            name='valuerag',
            description='Retrieval augmented product attribute value identification',
        )
        self.add_argument('--config', help='Configuration file')
        self.add_argument('--k', type=int, help='Candidate values per attribute')
        self.add_argument('--m', type=int, help='Reference products per prompt')
        self.add_argument('--generator', choices=GENERATOR_KINDS, help='Generator kind')
        self.add_argument('--encoder', choices=ENCODER_KINDS, help='Encoder kind for both indexes')
        self.add_argument('--out', help='Output directory')
        self.add_argument('--seed', type=int, help='Random seed')
        self.add_argument('--concurrency', type=int, help='Parallel products and requests')

        self.add_subcommand(IngestCommand('ingest', 'Validate taxonomy, corpus and reference pool'))
        self.add_subcommand(IndexCommand('index', 'Build value and reference product indexes'))
        self.add_subcommand(RetrieveCommand('retrieve', 'Write candidate values and reference products'))
        self.add_subcommand(PredictCommand('predict', 'Predict attribute values for the corpus'))
        self.add_subcommand(EvaluateCommand('evaluate', 'Score predictions against ground truth'))
        self.add_subcommand(SweepCommand('sweep', 'Evaluate a range of k or m values'))
        self.add_subcommand(ExportSftCommand('export-sft', 'Write fine-tuning records'))
        self.add_subcommand(SynthCommand('synth', 'Generate a synthetic taxonomy, corpus and pool'))
        self.add_subcommand(CompareCommand('compare', 'Metric deltas between two reports'))


def main(argv=None):
    return ValueRAGScript().run(argv)
