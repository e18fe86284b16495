"""
Rotinas numéricas do fluxo de aplicações harmônicas radial

Módulos:
    radial_kernel   núcleo do calor de modo 0, semigrupo e integral de Duhamel
    metric_model    famílias de métricas produto torcido e a fonte F
    green_radial    funções de Green de bola, anel e exterior (tabelas)
    kernel_io       formato de arquivo e cache das tabelas
    oracle3d        solver 3-D cartesiano usado como oráculo
    duhamel_solver  iteração de Picard em janelas e continuação até a explosão
    hmflow          o fluxo rho~ e suas verificações
    singularity     classificação de singularidades de funções calóricas

Nada aqui depende do Flask; os comandos em app.commands fazem a ponte.
"""
