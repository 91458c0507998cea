"""
Test component loggers, global levels and run file logs
"""

import logging
import unittest

from valuerag.log import ROOT_LOGGER, Logger, LoggerError

from test.fixtures import TempDirTestCase


def stream_handlers():
    return [h for h in logging.getLogger(ROOT_LOGGER).handlers if getattr(h, '_valuerag_stream', False)]


class test_log(TempDirTestCase):
    def tearDown(self):
        Logger.set_global_level('WARNING')
        super(test_log, self).tearDown()

    def test_component_loggers(self):
        first = Logger('log-test').default_stream
        self.assertEqual(first.name, '%s.log-test' % ROOT_LOGGER)
        self.assertIs(Logger('log-test').default_stream, first)
        Logger('log-test-other')
        self.assertEqual(len(stream_handlers()), 1)
        self.assertRaises(LoggerError, Logger('log-test').register_stream_handler, 'default_stream')

    def test_set_global_level(self):
        log = Logger('log-test').default_stream
        Logger.set_global_level('DEBUG')
        self.assertEqual(Logger('log-test').level, logging.DEBUG)
        self.assertEqual(log.level, logging.DEBUG)
        self.assertEqual(stream_handlers()[0].level, logging.DEBUG)
        Logger.set_global_level('WARNING')
        self.assertEqual(log.level, logging.WARNING)
        self.assertEqual(stream_handlers()[0].level, logging.WARNING)
        self.assertRaises(LoggerError, Logger.set_global_level, 'LOUD')

    def test_file_log_records_info(self):
        log = Logger('log-test').default_stream
        handler = Logger('log-test').register_file_handler('run', self.path('logs'))
        try:
            self.assertIs(Logger('log-test-other').register_file_handler('run', self.path('logs')), handler)
            self.assertEqual(handler.level, logging.INFO)
            self.assertEqual(stream_handlers()[0].level, logging.WARNING)
            log.info('indexed 3 partitions')
            log.debug('not recorded')
        finally:
            logging.getLogger(ROOT_LOGGER).removeHandler(handler)
            handler.close()

        text = self.read_bytes('logs', 'run.log').decode('utf-8')
        self.assertIn('INFO indexed 3 partitions', text)
        self.assertNotIn('not recorded', text)

    def test_file_log_invalid_level(self):
        self.assertRaises(LoggerError, Logger('log-test').register_file_handler, 'run', self.path('logs'), level='LOUD')


suite = unittest.TestLoader().loadTestsFromTestCase(test_log)
