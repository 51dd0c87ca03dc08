from setuptools import setup

setup(
    name='ghost-microscope',
    version='0.1',
    packages=['ghostscope'],
    package_data={'ghostscope': ['configs/*.json', 'configs/*.pgm']},
    install_requires=['numpy>=1.22', 'scipy>=1.8', 'Pillow>=9.3'],
    entry_points={'console_scripts': ['ghostscope=ghostscope.cli:main']},
    license='GPL-3.0',
    author='',
    author_email='',
    description='Wave-optics simulator of a two-arm thermal-light ghost-imaging microscope.'
)
