// log Beta reference values, computed with mpmath (mp.dps = 50) ahead of
// the build; shared by the unit and acceptance suites.
#pragma once

namespace oracles {

struct LogBetaCase {
    double a;
    double b;
    double expected;
};

inline constexpr LogBetaCase kLogBetaReference[] = {
    {0.001, 0.001, 7.600900817008347399318},
    {0.001, 0.05623413251903491, 6.925292988931383954643},
    {0.001, 3.1622776601683795, 6.906193774655228444167},
    {0.001, 177.82794100389228, 6.9020008804468442429},
    {0.001, 10000.0, 6.897968594962708334692},
    {0.005994842503189409, 0.001, 7.062019043435003928379},
    {0.005994842503189409, 0.05623413251903491, 5.217621983910988772716},
    {0.005994842503189409, 3.1622776601683795, 5.107513777793323294213},
    {0.005994842503189409, 177.82794100389228, 5.082383508657003833386},
    {0.005994842503189409, 10000.0, 5.058210675182287666719},
    {0.03593813663804628, 0.001, 6.935143205244896539303},
    {0.03593813663804628, 0.05623413251903491, 3.816976021075585768777},
    {0.03593813663804628, 3.1622776601683795, 3.270621125486173615737},
    {0.03593813663804628, 177.82794100389228, 3.120164899071605060659},
    {0.03593813663804628, 10000.0, 2.975255549706024079276},
    {0.21544346900318845, 0.001, 6.912078754518022241865},
    {0.21544346900318845, 0.05623413251903491, 3.09345763454050512229},
    {0.21544346900318845, 3.1622776601683795, 1.224772939953249816161},
    {0.21544346900318845, 177.82794100389228, 0.3296715342489921408443},
    {0.21544346900318845, 10000.0, -0.5389301335258738457288},
    {1.291549665014884, 0.001, 6.907357132096587350777},
    {1.291549665014884, 0.05623413251903491, 2.856585645566822779715},
    {1.291549665014884, 3.1622776601683795, -1.648591186509257414848},
    {1.291549665014884, 177.82794100389228, -6.799043415507910406733},
    {1.291549665014884, 10000.0, -12.00233532044752793144},
    {7.742636826811269, 0.001, 6.905198039421791338788},
    {7.742636826811269, 0.05623413251903491, 2.7366996707891257928},
    {7.742636826811269, 3.1622776601683795, -6.022368513339998355662},
    {7.742636826811269, 177.82794100389228, -32.2471444461156296399},
    {7.742636826811269, 10000.0, -63.30406035474356095307},
    {46.41588833612782, 0.001, 6.903352043524791696171},
    {46.41588833612782, 0.05623413251903491, 2.633071414338577002684},
    {46.41588833612782, 3.1622776601683795, -11.35998749443927617153},
    {46.41588833612782, 177.82794100389228, -115.2327490492033877151},
    {46.41588833612782, 10000.0, -296.8977913447067914215},
    {278.2559402207126, 0.001, 6.901552140228408278641},
    {278.2559402207126, 0.05623413251903491, 2.531883630729351948603},
    {278.2559402207126, 3.1622776601683795, -16.96327016209122827388},
    {278.2559402207126, 177.82794100389228, -306.4090030186696074111},
    {278.2559402207126, 10000.0, -1280.630010209316126931},
    {1668.100537200059, 0.001, 6.899759744000892323263},
    {1668.100537200059, 0.05623413251903491, 2.431094443391914217114},
    {1668.100537200059, 3.1622776601683795, -22.61639241507894704403},
    {1668.100537200059, 177.82794100389228, -586.6969902642259326651},
    {1668.100537200059, 10000.0, -4790.193628704502632838},
    {10000.0, 0.001, 6.897968594962708334692},
    {10000.0, 0.05623413251903491, 2.330371506988241395332},
    {10000.0, 3.1622776601683795, -28.27800734045200273832},
    {10000.0, 177.82794100389228, -897.6239182301026338411},
    {10000.0, 10000.0, -13866.28325676140963952},
};

}  // namespace oracles
