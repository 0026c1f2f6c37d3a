//! Key (2009) 201-point digital filter for zeroth- and first-order Hankel
//! transforms. Abscissae are `exp(-7.4 + 0.074 i)`, `i = 0..201`.

pub(crate) const LEN: usize = 201;
pub(crate) const LOG_BASE_START: f64 = -7.4;
pub(crate) const LOG_BASE_STEP: f64 = 0.074;

pub(crate) static J0_WEIGHTS: [f64; 201] = [
    1.10470281821632502e-01, -3.00286017404287897e-01, 0.00000000000000000e+00,
    9.30461199831773778e-01, -1.23798945678989503e+00, 0.00000000000000000e+00,
    1.52278249692386103e+00, -1.48126220718722701e+00, 0.00000000000000000e+00,
    1.20093868254396496e+00, -1.04235628161701710e+00, 0.00000000000000000e+00,
    8.18648215423318226e-01, -7.83797943910768069e-01, 0.00000000000000000e+00,
    1.07208793501788802e+00, -2.01797348274425303e+00, 2.63855191422843616e+00,
    -2.91697381041714010e+00, 2.93254771779104084e+00, -2.78203017690183607e+00,
    2.54863428794063696e+00, -2.28613254083444684e+00, 2.02866802943341318e+00,
    -1.79046654975403197e+00, 1.57977820643212308e+00, -1.39510079453578606e+00,
    1.23689977715053301e+00, -1.09963335400194806e+00, 9.82918060614936917e-01,
    -8.80812749583072097e-01, 7.93941732291194024e-01, -7.16639997576063115e-01,
    6.50805245357751194e-01, -5.90908776365097976e-01, 5.40034683305211316e-01,
    -4.92506229202048784e-01, 4.52501282905849400e-01, -4.13928215127944976e-01,
    3.82030382543279923e-01, -3.50069492058167508e-01, 3.24390746509144512e-01,
    -2.97399101064822702e-01, 2.76631789063775391e-01, -2.53431562556714118e-01,
    2.36661771259576298e-01, -2.16387521429456303e-01, 2.02971642059508794e-01,
    -1.84966377888554606e-01, 1.74447028391026687e-01, -1.58190178617123006e-01,
    1.50238638162912913e-01, -1.35295616813917108e-01, 1.29673243817324202e-01,
    -1.15661986038548104e-01, 1.12198182770603602e-01, -9.87703709865059565e-02,
    9.73530774732694754e-02, -8.41832455274758584e-02, 8.47534795644753342e-02,
    -7.15282980082591613e-02, 7.40748090719045155e-02, -6.04833687278039031e-02,
    6.50416260407271490e-02, -5.07707452610094284e-02, 5.74270623819205031e-02,
    -4.21580485133697322e-02, 5.10527683120547207e-02, -3.44540281601668982e-02,
    4.57813905980996028e-02, -2.74984240392017083e-02, 4.15073431814618407e-02,
    -2.11544963495181593e-02, 3.81522445626402626e-02, -1.53050071957540907e-02,
    3.56600696224223176e-02, -9.84457209404219699e-03, 3.39873558800462203e-02,
    -4.66963434204806672e-03, 3.30950574830826127e-02, 3.24877505726534109e-04,
    3.29486028566111089e-02, 5.24045127087006870e-03, 3.35219193127224077e-02,
    1.01683926699843198e-02, 3.47974801081080906e-02, 1.51864069486053795e-02,
    3.67598907747088421e-02, 2.03562309957358509e-02, 3.93853729415840625e-02,
    2.57172055206541100e-02, 4.26287902530109175e-02, 3.12726504723379178e-02,
    4.64058662192270432e-02, 3.69678931224126373e-02, 5.05666415272050529e-02,
    4.26573623016007902e-02, 5.48568154458310697e-02, 4.80569737390559235e-02,
    5.88632672619770411e-02, 5.26793423779762029e-02, 6.19408175410276624e-02,
    5.57526367208966075e-02, 6.31234830895176791e-02, 5.61317120514002524e-02,
    6.10387706393978186e-02, 5.22307338907255433e-02, 5.38734075405875729e-02,
    4.20500395925339568e-02, 3.94953729182670604e-02, 2.34446489676612795e-02,
    1.59297590086690706e-02, -5.11245495654665677e-03, -1.75042475731147888e-02,
    -4.29302858359969300e-02, -5.80653683519521471e-02, -8.44383768727371420e-02,
    -9.65164199464825928e-02, -1.16035356290281805e-01, -1.14571615103380195e-01,
    -1.15274691228035200e-01, -8.75311516376494070e-02, -5.91736760131236980e-02,
    -6.66037839909831104e-04, 4.96649448336190028e-02, 1.15720635742920894e-01,
    1.44896661110776787e-01, 1.58899833058596507e-01, 1.03159021234085393e-01,
    2.38946573739360207e-02, -1.00760080261593707e-01, -1.70108167914751307e-01,
    -1.80659633973087291e-01, -5.04422081148912724e-02, 1.06755882907048905e-01,
    2.24384320518191599e-01, 1.12486119213615093e-01, -1.06075002529004203e-01,
    -2.49468957604938396e-01, -2.53256390798178507e-02, 2.31309316259010800e-01,
    1.26504151742833387e-01, -2.71689556450125991e-01, -5.74167330169875131e-02,
    2.82835579855384822e-01, -1.15152918418768499e-01, -1.89523821438788209e-01,
    3.49898181837228484e-01, -3.28359448796664399e-01, 2.22868993551956190e-01,
    -1.19188270338438401e-01, 4.91413686120042228e-02, -1.08504633066921503e-02,
    -6.98967316605939720e-03, 1.39622509860293301e-02, -1.58324765405311908e-02,
    1.55379888748250101e-02, -1.44353414163653805e-02, 1.31093448742566707e-02,
    -1.17956256192321002e-02, 1.05790916798207402e-02, -9.48212915526580949e-03,
    8.50263634641782069e-03, -7.63007613897896762e-03, 6.85204314824498090e-03,
    -6.15676103806536527e-03, 5.53384940841649634e-03, -4.97438301046107360e-03,
    4.47069974747305639e-03, -4.01616187083269661e-03, 3.60495526061382692e-03,
    -3.23195186375457204e-03, 2.89263019061316087e-03, -2.58303464543038590e-03,
    2.29975096907718800e-03, -2.03987983885509181e-03, 1.80100001717161708e-03,
    -1.58112178404433705e-03, 1.37863789679707003e-03, -1.19228146355111406e-03,
    1.02109638061343593e-03, -8.64416954022583710e-04, 7.21843896709412894e-04,
    -5.93200632335106042e-04, 4.78459655593727615e-04, -3.77640636986940675e-04,
    2.90693748616416704e-04, -2.17388097043955689e-04, 1.57224702144643911e-04,
    -1.09388048099497804e-04, 7.27427882809017511e-05, -4.58750857933431976e-05,
    2.71728425423420298e-05, -1.49356966431170199e-05, 7.50207244420240119e-06,
    -3.37498000920297587e-06, 1.32302856657077394e-06, -4.34281334763188084e-07,
    1.12052938922573997e-07, -2.02367921739660696e-08, 1.92313395267799493e-09,
];

pub(crate) static J1_WEIGHTS: [f64; 201] = [
    1.28963392714436008e-05, -4.69285295701277487e-05, 5.71240750024078122e-05,
    0.00000000000000000e+00, -5.40189835650440028e-05, 0.00000000000000000e+00,
    1.16381360585598594e-04, -1.34158515898647395e-04, 0.00000000000000000e+00,
    1.56352988275131093e-04, -1.70193228500871289e-04, 0.00000000000000000e+00,
    2.68521272228249626e-04, -5.14862338614890730e-04, 6.65351998494221339e-04,
    -7.07223225549035057e-04, 6.68404776234799141e-04, -5.84796488868228942e-04,
    4.87702304897449695e-04, -3.93931346548531387e-04, 3.13634518098282727e-04,
    -2.47006406251992305e-04, 1.95399790209307294e-04, -1.53960229615816510e-04,
    1.23452983256530988e-04, -9.81700810612501232e-05, 8.05880436221188107e-05,
    -6.45145997554678094e-05, 5.45643043089341523e-05, -4.34441904340444621e-05,
    3.81552304983787487e-05, -2.94939365567791211e-05, 2.73218717676771790e-05,
    -1.95984297212720288e-05, 1.98291172636368901e-05, -1.20090479130296006e-05,
    1.44325160664656402e-05, -5.68376185797998718e-06, 1.04359455517734004e-05,
    4.51324022914611710e-08, 7.45760931872701568e-06, 5.65321675152901763e-06,
    5.30868840422296910e-06, 1.15279657066554302e-05, 3.93296160088858236e-06,
    1.80335284438590601e-05, 3.38068357492798390e-06, 2.55571602942689906e-05,
    3.80372918140294498e-06, 3.45489549178395330e-05, 5.46613982052361384e-06,
    4.55623477003942623e-05, 8.76810108452548323e-06, 5.93009737933532978e-05,
    1.42841630204628693e-05, 7.66767261596149920e-05, 2.28186604088182390e-05,
    9.88843653044727309e-05, 3.54828886769816226e-05, 1.27499540537385190e-04,
    5.38004177917010424e-05, 1.64609007021629909e-04, 7.98495641514843313e-05,
    2.12984279871644109e-04, 1.16455462905355902e-04, 2.76313392811433807e-04,
    1.67448538741785910e-04, 3.59510011286198218e-04, 2.38011827633984995e-04,
    4.69125341707757012e-04, 3.35146365753838924e-04, 6.13897095251121194e-04,
    4.68291916150986908e-04, 8.05480570367069241e-04, 6.50151998630468212e-04,
    1.05941791388595909e-03, 8.97788165149809468e-04, 1.39641449463184905e-03,
    1.23406477236437406e-03, 1.84400909702434599e-03, 1.68953832738706297e-03,
    2.43874427486322903e-03, 2.30489551625924407e-03, 3.22895248833787686e-03,
    3.13404918149769391e-03, 4.27826045705523902e-03, 4.24798135621115222e-03,
    5.66986412783082594e-03, 5.73934168729985181e-03, 7.51150087656655713e-03,
    7.72761476818928806e-03, 9.94076844610452572e-03, 1.03642680700413593e-02,
    1.31298792233179498e-02, 1.38365214409301995e-02, 1.72878829264013593e-02,
    1.83669592440654714e-02, 2.26565144216787397e-02, 2.42037207176671910e-02,
    2.94926236690029112e-02, 3.15919163125883973e-02, 3.80249985441757088e-02,
    4.07106539186884928e-02, 4.83658887104837787e-02, 5.15515042679529426e-02,
    6.03483556566111190e-02, 6.37053081848427405e-02, 7.32537478760264954e-02,
    7.60224603735433629e-02, 8.54018288413403853e-02, 8.61375679798425803e-02,
    9.36304521200180956e-02, 8.99478055203149635e-02, 9.28543834669404572e-02,
    8.13853816959765192e-02, 7.62570141851877381e-02, 5.33184028194107068e-02,
    3.72841063782684418e-02, 1.08891830386287098e-03, -2.48218556266767698e-02,
    -6.96698503857369200e-02, -9.50837043651077268e-02, -1.32045779687794990e-01,
    -1.33318891351880298e-01, -1.34567983165602006e-01, -8.40360551199305639e-02,
    -3.27015330965537976e-02, 6.37470097799079233e-02, 1.24372003160027597e-01,
    1.81896770558326898e-01, 1.37574065217591690e-01, 5.81187330410527572e-02,
    -1.04308775862701694e-01, -1.81559582314762796e-01, -1.81991712997968708e-01,
    1.63140269342831185e-02, 1.75237563247440997e-01, 2.15230894575909909e-01,
    -6.13583472802582616e-02, -2.26001273233931710e-01, -1.05881882636004898e-01,
    2.75172032805749311e-01, 7.28207843612127398e-02, -2.45390419763115514e-01,
    -2.98155294415177290e-02, 3.29532115835501516e-01, -3.39568875528958092e-01,
    1.43734775712174606e-01, 5.56913733186431073e-02, -1.61897534903484797e-01,
    1.84088161833026787e-01, -1.63847565068552997e-01, 1.32309897918724190e-01,
    -1.03584431183612893e-01, 8.13282332171630373e-02, -6.50210852528180089e-02,
    5.31663245934371823e-02, -4.44148368962873005e-02, 3.77901725645491474e-02,
    -3.26363159541342707e-02, 2.85210433961638685e-02, -2.51578544061128416e-02,
    2.23533948248374401e-02, -1.99741604689476007e-02, 1.79257403744469100e-02,
    -1.61398061885126912e-02, 1.45658280249377908e-02, -1.31656926629833797e-02,
    1.19101328357522594e-02, -1.07763104887574693e-02, 9.74615153760393857e-03,
    -8.80517985668429967e-03, 7.94168888503592879e-03, -7.14614581153625011e-03,
    6.41075935746166902e-03, -5.72916501082831788e-03, 5.09619569412095557e-03,
    -4.50771436459352758e-03, 3.96049005062352761e-03, -3.45210171114471902e-03,
    2.98085603746317193e-03, -2.54570655173922593e-03, 2.14616247538907800e-03,
    -1.78217714798881502e-03, 1.45400774741424291e-03, -1.16204136628841599e-03,
    9.06587821311087430e-04, -6.87647380162654826e-04, 5.04671833560319015e-04,
    -3.56348911772918326e-04, 2.40450173988147203e-04, -1.53786572177556496e-04,
    9.23083410500598816e-05, -5.13625291420843433e-05, 2.60831821218588002e-05,
    -1.18449967774313301e-05, 4.67858771866811598e-06, -1.54406422378428802e-06,
    3.99592180302197705e-07, -7.21941601981910479e-08, 6.84486410588560341e-09,
];
