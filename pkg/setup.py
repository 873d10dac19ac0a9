from setuptools import find_namespace_packages, setup

with open("requirements.txt", "r") as file:
    requirements = [line.strip() for line in file
                    if line.strip() and not line.startswith("pytest")]

setup(
    name="zsre-sideinfo",
    version="0.1.0",
    description="Zero-shot document-level relation extraction with entity "
                "side information",
    packages=find_namespace_packages(include=["Code", "Code.*"]),
    package_data={
        "Code.EntitySideInformation": ["prompts/*.txt"],
        "Code.Pipeline": ["default_config.json"],
    },
    python_requires=">=3.9",
    install_requires=requirements,
    entry_points={"console_scripts": ["zsre=Code.Pipeline.cli:main"]},
)
