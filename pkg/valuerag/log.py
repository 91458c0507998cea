"""
Logging front-end shared by all valuerag components
"""

import os
import logging
import logging.handlers

ROOT_LOGGER = 'valuerag'
DEFAULT_LOGFORMAT = '%(name)s %(levelname)s %(message)s'
DEFAULT_TIME_FORMAT = '%Y-%m-%d %H:%M:%S'
DEFAULT_LOGFILEFORMAT = '%(asctime)s %(name)s.%(funcName)s %(levelname)s %(message)s'
DEFAULT_LOGSIZE_LIMIT = 2**20
DEFAULT_LOG_BACKUPS = 10


class LoggerError(Exception):
    """
    Exceptions raised by logging configuration
    """
    def __str__(self):
        return self.args[0]


class Logger(object):
    """
    Singleton class for common logging tasks.

    Each component asks for its logger by name:

        log = Logger('retrieval').default_stream

    All component loggers are children of the 'valuerag' logger and share
    its stream handler, so one level change reaches every component.
    """
    __instances = {}
    stream_level = logging.WARNING

    def __init__(self, name=None):
        name = name is not None and name or self.__class__.__name__
        if name not in Logger.__instances:
            Logger.__instances[name] = Logger.LoggerInstance(name)
        self.__dict__['_Logger__instances'] = Logger.__instances
        self.__dict__['name'] = name

    @classmethod
    def set_global_level(cls, value):
        """
        Set log level for every registered component logger and the console
        """
        for instance in cls.__instances.values():
            instance.set_level(value)
        cls.stream_level = getattr(logging, value)
        root = logging.getLogger(ROOT_LOGGER)
        root.setLevel(cls.stream_level)
        for handler in root.handlers:
            if getattr(handler, '_valuerag_stream', False):
                handler.setLevel(cls.stream_level)

    @classmethod
    def open_level(cls, level):
        """
        Pass records at level through every component logger

        The console handler keeps its own threshold, so only file handlers
        see the extra records.
        """
        for instance in cls.__instances.values():
            if instance.loglevel > level:
                instance.loglevel = level
        root = logging.getLogger(ROOT_LOGGER)
        if not root.level or root.level > level:
            root.setLevel(level)

    class LoggerInstance(dict):
        """
        Singleton implementation of logging configuration for one component
        """
        def __init__(self, name):
            self.name = name
            self.loglevel = logging.getLogger(ROOT_LOGGER).level or logging.WARNING
            self.timeformat = DEFAULT_TIME_FORMAT
            self.register_stream_handler('default_stream')

        def __getattr__(self, attr):
            if attr in self.keys():
                return self[attr]
            raise AttributeError('No such LoggerInstance attribute: %s' % attr)

        def __setattr__(self, attr, value):
            if attr in ['level', 'loglevel']:
                for logger in self.values():
                    logger.setLevel(value)
                self.__dict__['loglevel'] = value
            else:
                object.__setattr__(self, attr, value)

        def register_stream_handler(self, name, logformat=None, timeformat=None):
            """
            Register the common stderr stream handler
            """
            if name in self.keys():
                raise LoggerError('Handler name already registered to %s: %s' % (self.name, name))

            if logformat is None:
                logformat = DEFAULT_LOGFORMAT
            if timeformat is None:
                timeformat = DEFAULT_TIME_FORMAT

            root = logging.getLogger(ROOT_LOGGER)
            if not any(getattr(h, '_valuerag_stream', False) for h in root.handlers):
                handler = logging.StreamHandler()
                handler.setLevel(Logger.stream_level)
                handler.setFormatter(logging.Formatter(logformat, timeformat))
                handler._valuerag_stream = True
                root.addHandler(handler)

            logger = logging.getLogger('%s.%s' % (ROOT_LOGGER, self.name))
            logger.setLevel(self.loglevel)
            self[name] = logger

        def register_file_handler(self, name, directory,
                                  logformat=None,
                                  maxBytes=DEFAULT_LOGSIZE_LIMIT,
                                  backupCount=DEFAULT_LOG_BACKUPS,
                                  level='INFO'):
            """
            Register a rotating file log for this component and its children

            Records at level and above reach the file regardless of the console
            level. Registering the same file twice is a no-op.
            """
            if not isinstance(getattr(logging, level, None), int):
                raise LoggerError('Invalid logging level: %s' % level)
            if logformat is None:
                logformat = DEFAULT_LOGFILEFORMAT

            if not os.path.isdir(directory):
                try:
                    os.makedirs(directory)
                except OSError:
                    raise LoggerError('Error creating directory: %s' % directory)

            logfile = os.path.abspath(os.path.join(directory, '%s.log' % name))
            target = logging.getLogger(ROOT_LOGGER)
            for handler in target.handlers:
                if getattr(handler, 'baseFilename', None) == logfile:
                    return handler

            handler = logging.handlers.RotatingFileHandler(
                filename=logfile,
                mode='a+',
                maxBytes=maxBytes,
                backupCount=backupCount,
                encoding='utf-8',
            )
            handler.setLevel(getattr(logging, level))
            handler.setFormatter(logging.Formatter(logformat, self.timeformat))
            target.addHandler(handler)
            Logger.open_level(handler.level)
            return handler

        @property
        def level(self):
            return self.loglevel

        def set_level(self, value):
            if not hasattr(logging, value):
                raise LoggerError('Invalid logging level: %s' % value)
            level = getattr(logging, value)
            if not isinstance(level, int):
                raise LoggerError('Not integer value: %s (%s)' % (value, type(level)))
            self.loglevel = level

    def __getattr__(self, attr):
        return getattr(self.__instances[self.name], attr)

    def __setattr__(self, attr, value):
        setattr(self.__instances[self.name], attr, value)

    def __getitem__(self, item):
        return self.__instances[self.name][item]

    def __setitem__(self, item, value):
        self.__instances[self.name][item] = value
