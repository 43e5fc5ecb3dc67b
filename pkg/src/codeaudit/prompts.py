"""Assessor prompt texts and structured-output schema descriptors.

These are operational data, carried verbatim (including their quirks):
assessor backends receive exactly this text plus the schema descriptor.
The repository prompt names one field "hardware_requirements" while the
schema uses "lists_hardware_requirements"; the schema name is
authoritative on output, and parsing accepts both.
"""

PAPER_SCREENING_PROMPT = """\
We include a paper in our analysis if it is a project in which a multivariable prediction model is developed, updated or validated using any statistical or machine learning technique.
It has to be in the study itself, not as a reference to another paper. For instance, a protocol that details how a prediction model will be run in a future study does not qualify.
If the study itself uses any statistical model, such as a COX regression model, a multivariable logistic regression, for example, it should be included and will count as meeting the criteria. Any modality of prediction model is included, also include time series models, image-based models, and text-based models.
Given a paper, decide if the paper would fit this criteria. You need to provide a a boolean match (in the is_match field) and a reason for whether the paper meets the criteria (in the reason field).
In the field country_first_author_institution, return the country of origin based on the university / company of affiliation of the first author. Use the ISO 3166 standard name of the country in your response. If the information cannot be found, return 'not reported'.
Additionally, return a URL to the paper's code repository (in the field repo_url) if it is provided and the paper is a match.
The repository should be reported to contain the code used to conduct the study, do not report a repository for a library or tool that was developed external to the paper but was used in the study.
Report only code repositories, not model or data repositories. If a user account link to a repository platform is reported instead of a repository, you can report it.
Otherwise, always report the root of the repository, ignoring releases or subfolders that could be included in the link.
If in the supplementary material or appendix section the code is reported, return 'Appendix' as the URL (but it has to explicitly mention that this supplemental contains the code). If a DOI is provided as the repository link, format it in a resolvable URL form.
In the field code_statement_locations, return the list of all locations in the paper where a code availability statement appears, if a repo_url is found. Use ['other'] if the code availability statement location does not fit the available categories.
In the field code_statement_sentence, if repo_url is found, return the sentence introducing the repository url (without the url itself), for example 'The code can be found here:', 'Our code is provided here'.
"""

REPO_ASSESSMENT_PROMPT = """\
You will be provided the tree of a repository and its code. Use it to assess the quality of the repository.
You should return a boolean for each of these categories:
- is_empty: is the repository empty? A repository is considered empty if it contains no files, only files that are empty, or only a README file.
- contains_readme: does the repository contain instructions on how the code is structured and how to use it (such as a README.md, README.txt or README file)?
- readme_purpose_and_outputs: (don't return anything for this field if contains_readme is false) do these instructions provide an overview of the purpose of the code repository, and its expected outputs?
- contains_requirements: does the repository specify the software dependencies used to run the code in a separate file (for example as a requirements.txt, environment.yml, or pyproject.toml file) or in the README file?
- requirements_dependency_versions: (don't return anything for this field if requirements_dependency_versions is false) does the requirements file specify dependency version requirements?
- contains_license: does the repository include a license file specifying how others can use this code?
- sufficient_code_documentation: does the code include sufficient inline documentation or comments explaining the purpose and functionality of key components of the code for a user to understand its logic?
- is_modular_and_structured: is the code organized into modular, reusable components using functions and classes where appropriate, rather than consisting of a single or a few long scripts?
- implements_tests: does the repository include unit tests or functional tests to verify that the code works as intended? This may include test scripts, test files, or embedded assertions that check whether inputs and outputs behave as expected.
- fixes_seed_if_stochastic: (If applicable, don't return anything if the repository doesn't use stochastic processes) if using stochastic processes (e.g., random number generation, machine learning models), is the repository setting fixed random seeds to ensure reproducibility?
- hardware_requirements: are hardware requirements listed?
- contains_link_to_paper: does the repository contain a link to the paper it was used for?
- contains_citation: does the repository include a citation to the paper, in the format of a latex citation key or in plain text?
- includes_data_or_sample: does the repository include either the original dataset or a sample dataset for demonstration purposes?
- comments_and_explanations: provide additional comments and explanations regarding the repository's quality, strengths, weaknesses, or any notable aspects that may not be fully captured by the boolean assessments above.
- coding_languages: (if the repository contains code) list all programming languages used in the repository.
"""

CODE_STATEMENT_LOCATIONS = (
    "abstract",
    "introduction",
    "methods",
    "results",
    "discussion",
    "data_availability_section",
    "code_availability_section",
    "supplementary_material",
    "other",
)

PAPER_ASSESSMENT_SCHEMA = {
    "name": "paper_assessment",
    "fields": {
        "is_match": {"type": "boolean", "required": True},
        "reason": {"type": "string", "required": True},
        "country_first_author_institution": {"type": "string", "required": True},
        "repo_url": {"type": "string", "required": False},
        "code_statement_locations": {
            "type": "array",
            "items": {"enum": list(CODE_STATEMENT_LOCATIONS)},
            "required": False,
        },
        "code_statement_sentence": {"type": "string", "required": False},
    },
}

REPO_ASSESSMENT_SCHEMA = {
    "name": "repo_assessment",
    "fields": {
        "is_empty": {"type": "boolean", "required": True},
        "contains_readme": {"type": "boolean", "required": True},
        "readme_purpose_and_outputs": {"type": "boolean", "required": False},
        "contains_requirements": {"type": "boolean", "required": True},
        "requirements_dependency_versions": {"type": "boolean", "required": False},
        "contains_license": {"type": "boolean", "required": True},
        "sufficient_code_documentation": {"type": "boolean", "required": True},
        "is_modular_and_structured": {"type": "boolean", "required": True},
        "implements_tests": {"type": "boolean", "required": True},
        "fixes_seed_if_stochastic": {"type": "boolean", "required": False},
        "lists_hardware_requirements": {"type": "boolean", "required": True},
        "contains_link_to_paper": {"type": "boolean", "required": True},
        "contains_citation": {"type": "boolean", "required": True},
        "includes_data_or_sample": {"type": "boolean", "required": True},
        "comments_and_explanations": {"type": "string", "required": False},
        "coding_languages": {"type": "array", "items": {"type": "string"}, "required": False},
    },
}
