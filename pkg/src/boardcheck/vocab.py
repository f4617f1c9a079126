"""Namespace IRIs and vocabulary terms used across the knowledge-graph layer."""

SOSA = "http://www.w3.org/ns/sosa/"
TASI = "http://www.semanticweb.org/ontologies/tasi#"
TASI_POL = "http://tasi.com/pol#"
TASI_REPORT = "http://tasi.com#"
RDF = "http://www.w3.org/1999/02/22-rdf-syntax-ns#"
RDFS = "http://www.w3.org/2000/01/rdf-schema#"
XSD = "http://www.w3.org/2001/XMLSchema#"
CDT = "https://w3id.org/cdt/"

DEFAULT_PREFIXES = {
    "sosa": SOSA,
    "tasi": TASI,
    "tasi-pol": TASI_POL,
    "rdf": RDF,
    "rdfs": RDFS,
    "xsd": XSD,
    "cdt": CDT,
}

RDF_TYPE = RDF + "type"
RDF_LANG_STRING = RDF + "langString"
RDFS_LABEL = RDFS + "label"
RDFS_SUBCLASS_OF = RDFS + "subClassOf"
XSD_STRING = XSD + "string"
XSD_DATETIME = XSD + "dateTime"
CDT_UCUM = CDT + "ucum"

SOSA_OBSERVATION = SOSA + "Observation"
SOSA_OBSERVABLE_PROPERTY = SOSA + "ObservableProperty"
SOSA_OBSERVED_PROPERTY = SOSA + "observedProperty"
SOSA_HAS_SIMPLE_RESULT = SOSA + "hasSimpleResult"

TASI_TEST_REPORT = TASI + "TestReport"
TASI_REPORTS = TASI + "reports"
TASI_HAS_ACCEPTANCE_LIMITS = TASI + "hasAcceptanceLimits"
TASI_HAS_TEST_RESULT = TASI + "hasTestResult"
TASI_REPORTED_IN = TASI + "reportedIn"
TASI_TEST_REPORT_DATE = TASI + "testReportDate"
TASI_TEST_REPORT_NAME = TASI + "testReportName"
TASI_TEST_REPORT_REFERENCE = TASI + "testReportReference"
TASI_TEST_REPORT_VALIDATION = TASI + "testReportValidation"
TASI_TEST_REPORT_LOCATION = TASI + "testReportLocation"
TASI_ACC_LIM_LOCATION = TASI + "obsPropertyAccLimLocation"
TASI_RESULTS_LOCATION = TASI + "obsPropertyResultsLocation"
TASI_COLUMN_HINT = TASI + "obsPropertyColumnHint"
