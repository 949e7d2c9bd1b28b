class ExtractorError(Exception):
    pass


class DatasetUnavailable(ExtractorError):
    pass


class BackboneLoadFailure(ExtractorError):
    pass


class EmptyCorpus(ExtractorError):
    pass


class BadJob(ExtractorError):
    pass
