# Version of micarraytools; keep in sync with setup.cfg
version = '0.1.dev'
githash = ''
release = 'dev' not in version
