//! Adaptive explicit Runge-Kutta integration with continuous dense output and
//! event location.
//!
//! The scheme is the Dormand-Prince 8(5,3) pair with its 7th-order
//! interpolant. Constrained systems are projected back onto their manifold
//! after every accepted step; the interpolant is corrected linearly so that it
//! still reproduces the stored (projected) node states exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, EventFailure, Result};
pub use crate::systems::FieldId;
use crate::systems::{IntegrableSystem, PhasePoint, Vec6};
use crate::tolerances::{ABS_TOL, EVENT_REFINE_TOL, MAX_STEP, REL_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    /// `None` selects the per-system budget from [`crate::tolerances`].
    pub max_time: Option<f64>,
    pub event_refine_tol: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rel_tol: REL_TOL,
            abs_tol: ABS_TOL,
            max_step: MAX_STEP,
            max_time: None,
            event_refine_tol: EVENT_REFINE_TOL,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.rel_tol, self.abs_tol, self.max_step, self.event_refine_tol]
            .iter()
            .all(|x| x.is_finite() && *x > 0.0)
            && self.max_time.is_none_or(|t| t.is_finite() && t > 0.0)
            && self.event_refine_tol <= self.abs_tol;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid integrator configuration {self:?}")))
        }
    }

    fn max_time_for(&self, sys: &IntegrableSystem) -> f64 {
        self.max_time.unwrap_or_else(|| sys.default_max_time())
    }
}

// Dormand-Prince 8(5,3) coefficients with the 7th-order dense output extension.
#[allow(clippy::excessive_precision, clippy::unreadable_literal)]
mod dp853 {
    pub const A21: f64 = 5.26001519587677318785587544488E-2;
    pub const A31: f64 = 1.97250569845378994544595329183E-2;
    pub const A32: f64 = 5.91751709536136983633785987549E-2;
    pub const A41: f64 = 2.95875854768068491816892993775E-2;
    pub const A43: f64 = 8.87627564304205475450678981324E-2;
    pub const A51: f64 = 2.41365134159266685502369798665E-1;
    pub const A53: f64 = -8.84549479328286085344864962717E-1;
    pub const A54: f64 = 9.24834003261792003115737966543E-1;
    pub const A61: f64 = 3.7037037037037037037037037037E-2;
    pub const A64: f64 = 1.70828608729473871279604482173E-1;
    pub const A65: f64 = 1.25467687566822425016691814123E-1;
    pub const A71: f64 = 3.7109375E-2;
    pub const A74: f64 = 1.70252211019544039314978060272E-1;
    pub const A75: f64 = 6.02165389804559606850219397283E-2;
    pub const A76: f64 = -1.7578125E-2;
    pub const A81: f64 = 3.70920001185047927108779319836E-2;
    pub const A84: f64 = 1.70383925712239993810214054705E-1;
    pub const A85: f64 = 1.07262030446373284651809199168E-1;
    pub const A86: f64 = -1.53194377486244017527936158236E-2;
    pub const A87: f64 = 8.27378916381402288758473766002E-3;
    pub const A91: f64 = 6.24110958716075717114429577812E-1;
    pub const A94: f64 = -3.36089262944694129406857109825E0;
    pub const A95: f64 = -8.68219346841726006818189891453E-1;
    pub const A96: f64 = 2.75920996994467083049415600797E1;
    pub const A97: f64 = 2.01540675504778934086186788979E1;
    pub const A98: f64 = -4.34898841810699588477366255144E1;
    pub const A101: f64 = 4.77662536438264365890433908527E-1;
    pub const A104: f64 = -2.48811461997166764192642586468E0;
    pub const A105: f64 = -5.90290826836842996371446475743E-1;
    pub const A106: f64 = 2.12300514481811942347288949897E1;
    pub const A107: f64 = 1.52792336328824235832596922938E1;
    pub const A108: f64 = -3.32882109689848629194453265587E1;
    pub const A109: f64 = -2.03312017085086261358222928593E-2;
    pub const A111: f64 = -9.3714243008598732571704021658E-1;
    pub const A114: f64 = 5.18637242884406370830023853209E0;
    pub const A115: f64 = 1.09143734899672957818500254654E0;
    pub const A116: f64 = -8.14978701074692612513997267357E0;
    pub const A117: f64 = -1.85200656599969598641566180701E1;
    pub const A118: f64 = 2.27394870993505042818970056734E1;
    pub const A119: f64 = 2.49360555267965238987089396762E0;
    pub const A1110: f64 = -3.0467644718982195003823669022E0;
    pub const A121: f64 = 2.27331014751653820792359768449E0;
    pub const A124: f64 = -1.05344954667372501984066689879E1;
    pub const A125: f64 = -2.00087205822486249909675718444E0;
    pub const A126: f64 = -1.79589318631187989172765950534E1;
    pub const A127: f64 = 2.79488845294199600508499808837E1;
    pub const A128: f64 = -2.85899827713502369474065508674E0;
    pub const A129: f64 = -8.87285693353062954433549289258E0;
    pub const A1210: f64 = 1.23605671757943030647266201528E1;
    pub const A1211: f64 = 6.43392746015763530355970484046E-1;
    pub const A141: f64 = 5.61675022830479523392909219681E-2;
    pub const A147: f64 = 2.53500210216624811088794765333E-1;
    pub const A148: f64 = -2.46239037470802489917441475441E-1;
    pub const A149: f64 = -1.24191423263816360469010140626E-1;
    pub const A1410: f64 = 1.5329179827876569731206322685E-1;
    pub const A1411: f64 = 8.20105229563468988491666602057E-3;
    pub const A1412: f64 = 7.56789766054569976138603589584E-3;
    pub const A1413: f64 = -8.298E-3;
    pub const A151: f64 = 3.18346481635021405060768473261E-2;
    pub const A156: f64 = 2.83009096723667755288322961402E-2;
    pub const A157: f64 = 5.35419883074385676223797384372E-2;
    pub const A158: f64 = -5.49237485713909884646569340306E-2;
    pub const A1511: f64 = -1.08347328697249322858509316994E-4;
    pub const A1512: f64 = 3.82571090835658412954920192323E-4;
    pub const A1513: f64 = -3.40465008687404560802977114492E-4;
    pub const A1514: f64 = 1.41312443674632500278074618366E-1;
    pub const A161: f64 = -4.28896301583791923408573538692E-1;
    pub const A166: f64 = -4.69762141536116384314449447206E0;
    pub const A167: f64 = 7.68342119606259904184240953878E0;
    pub const A168: f64 = 4.06898981839711007970213554331E0;
    pub const A169: f64 = 3.56727187455281109270669543021E-1;
    pub const A1613: f64 = -1.39902416515901462129418009734E-3;
    pub const A1614: f64 = 2.9475147891527723389556272149E0;
    pub const A1615: f64 = -9.15095847217987001081870187138E0;
    pub const B1: f64 = 5.42937341165687622380535766363E-2;
    pub const B6: f64 = 4.45031289275240888144113950566E0;
    pub const B7: f64 = 1.89151789931450038304281599044E0;
    pub const B8: f64 = -5.8012039600105847814672114227E0;
    pub const B9: f64 = 3.1116436695781989440891606237E-1;
    pub const B10: f64 = -1.52160949662516078556178806805E-1;
    pub const B11: f64 = 2.01365400804030348374776537501E-1;
    pub const B12: f64 = 4.47106157277725905176885569043E-2;
    pub const BHH1: f64 = 0.244094488188976377952755905512E+00;
    pub const BHH2: f64 = 0.733846688281611857341361741547E+00;
    pub const BHH3: f64 = 0.220588235294117647058823529412E-01;
    pub const ER1: f64 = 0.1312004499419488073250102996E-01;
    pub const ER6: f64 = -0.1225156446376204440720569753E+01;
    pub const ER7: f64 = -0.4957589496572501915214079952E+00;
    pub const ER8: f64 = 0.1664377182454986536961530415E+01;
    pub const ER9: f64 = -0.3503288487499736816886487290E+00;
    pub const ER10: f64 = 0.3341791187130174790297318841E+00;
    pub const ER11: f64 = 0.8192320648511571246570742613E-01;
    pub const ER12: f64 = -0.2235530786388629525884427845E-01;
    pub const D41: f64 = -0.84289382761090128651353491142E+01;
    pub const D46: f64 = 0.56671495351937776962531783590E+00;
    pub const D47: f64 = -0.30689499459498916912797304727E+01;
    pub const D48: f64 = 0.23846676565120698287728149680E+01;
    pub const D49: f64 = 0.21170345824450282767155149946E+01;
    pub const D410: f64 = -0.87139158377797299206789907490E+00;
    pub const D411: f64 = 0.22404374302607882758541771650E+01;
    pub const D412: f64 = 0.63157877876946881815570249290E+00;
    pub const D413: f64 = -0.88990336451333310820698117400E-01;
    pub const D414: f64 = 0.18148505520854727256656404962E+02;
    pub const D415: f64 = -0.91946323924783554000451984436E+01;
    pub const D416: f64 = -0.44360363875948939664310572000E+01;
    pub const D51: f64 = 0.10427508642579134603413151009E+02;
    pub const D56: f64 = 0.24228349177525818288430175319E+03;
    pub const D57: f64 = 0.16520045171727028198505394887E+03;
    pub const D58: f64 = -0.37454675472269020279518312152E+03;
    pub const D59: f64 = -0.22113666853125306036270938578E+02;
    pub const D510: f64 = 0.77334326684722638389603898808E+01;
    pub const D511: f64 = -0.30674084731089398182061213626E+02;
    pub const D512: f64 = -0.93321305264302278729567221706E+01;
    pub const D513: f64 = 0.15697238121770843886131091075E+02;
    pub const D514: f64 = -0.31139403219565177677282850411E+02;
    pub const D515: f64 = -0.93529243588444783865713862664E+01;
    pub const D516: f64 = 0.35816841486394083752465898540E+02;
    pub const D61: f64 = 0.19985053242002433820987653617E+02;
    pub const D66: f64 = -0.38703730874935176555105901742E+03;
    pub const D67: f64 = -0.18917813819516756882830838328E+03;
    pub const D68: f64 = 0.52780815920542364900561016686E+03;
    pub const D69: f64 = -0.11573902539959630126141871134E+02;
    pub const D610: f64 = 0.68812326946963000169666922661E+01;
    pub const D611: f64 = -0.10006050966910838403183860980E+01;
    pub const D612: f64 = 0.77771377980534432092869265740E+00;
    pub const D613: f64 = -0.27782057523535084065932004339E+01;
    pub const D614: f64 = -0.60196695231264120758267380846E+02;
    pub const D615: f64 = 0.84320405506677161018159903784E+02;
    pub const D616: f64 = 0.11992291136182789328035130030E+02;
    pub const D71: f64 = -0.25693933462703749003312586129E+02;
    pub const D76: f64 = -0.15418974869023643374053993627E+03;
    pub const D77: f64 = -0.23152937917604549567536039109E+03;
    pub const D78: f64 = 0.35763911791061412378285349910E+03;
    pub const D79: f64 = 0.93405324183624310003907691704E+02;
    pub const D710: f64 = -0.37458323136451633156875139351E+02;
    pub const D711: f64 = 0.10409964950896230045147246184E+03;
    pub const D712: f64 = 0.29840293426660503123344363579E+02;
    pub const D713: f64 = -0.43533456590011143754432175058E+02;
    pub const D714: f64 = 0.96324553959188282948394950600E+02;
    pub const D715: f64 = -0.39177261675615439165231486172E+02;
    pub const D716: f64 = -0.14972683625798562581422125276E+03;
}

use dp853::*;

/// One accepted step with its interpolating polynomial, in the integration
/// variable `tau >= 0`.
#[derive(Debug, Clone)]
pub struct DenseStep {
    pub tau0: f64,
    pub h: f64,
    cont: [Vec6; 8],
}

impl DenseStep {
    pub fn tau1(&self) -> f64 {
        self.tau0 + self.h
    }

    pub fn eval(&self, tau: f64) -> Vec6 {
        let s = (tau - self.tau0) / self.h;
        let s1 = 1.0 - s;
        let c = &self.cont;
        let mut y = [0.0; 6];
        for i in 0..6 {
            let conpar = c[4][i] + s * (c[5][i] + s1 * (c[6][i] + s * c[7][i]));
            y[i] = c[0][i] + s * (c[1][i] + s1 * (c[2][i] + s * (c[3][i] + s1 * conpar)));
        }
        y
    }
}

/// Maximal conserved-quantity and constraint deviations seen at step nodes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Drift {
    pub h0: f64,
    pub j0: f64,
    pub max_dh: f64,
    pub max_dj: f64,
    pub max_constraint: f64,
}

impl Drift {
    pub fn max_dev(&self) -> f64 {
        self.max_dh.max(self.max_dj)
    }

    pub fn merge(&mut self, other: &Drift) {
        self.max_dh = self.max_dh.max(other.max_dh);
        self.max_dj = self.max_dj.max(other.max_dj);
        self.max_constraint = self.max_constraint.max(other.max_constraint);
    }
}

struct Stepper<'a> {
    sys: &'a IntegrableSystem,
    field: FieldId,
    sign: f64,
    cfg: IntegratorConfig,
    n: usize,
    tau: f64,
    y: Vec6,
    k1: Vec6,
    h: f64,
    facold: f64,
    rejected: bool,
    drift: Drift,
    drift_limit: f64,
    drift_tol: f64,
}

#[inline]
fn combo(y: &Vec6, h: f64, terms: &[(f64, &Vec6)]) -> Vec6 {
    let mut out = *y;
    for (c, k) in terms {
        let ch = c * h;
        for i in 0..6 {
            out[i] += ch * k[i];
        }
    }
    out
}

impl<'a> Stepper<'a> {
    fn new(
        sys: &'a IntegrableSystem,
        field: FieldId,
        sign: f64,
        p0: &PhasePoint,
        cfg: &IntegratorConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let y = p0.coords;
        let (h0, j0) = (sys.h_raw(&y), sys.j_raw(&y));
        let scale = 1.0 + h0.abs() + j0.abs() + p0.norm_sq();
        let drift_tol = 100.0 * cfg.rel_tol.max(cfg.abs_tol);
        let mut st = Stepper {
            sys,
            field,
            sign,
            cfg: *cfg,
            n: sys.dim(),
            tau: 0.0,
            y,
            k1: [0.0; 6],
            h: 0.0,
            facold: 1e-4,
            rejected: false,
            drift: Drift { h0, j0, ..Default::default() },
            drift_limit: drift_tol * scale,
            drift_tol,
        };
        st.k1 = st.f(&st.y);
        st.h = st.initial_step();
        Ok(st)
    }

    #[inline]
    fn f(&self, y: &Vec6) -> Vec6 {
        let mut v = self.sys.field_raw(self.field, y);
        if self.sign < 0.0 {
            for c in v.iter_mut() {
                *c = -*c;
            }
        }
        v
    }

    fn sk(&self, a: f64, b: f64) -> f64 {
        self.cfg.abs_tol + self.cfg.rel_tol * a.abs().max(b.abs())
    }

    fn initial_step(&self) -> f64 {
        let (mut dnf, mut dny) = (0.0, 0.0);
        for i in 0..self.n {
            let sk = self.sk(self.y[i], self.y[i]);
            dnf += (self.k1[i] / sk).powi(2);
            dny += (self.y[i] / sk).powi(2);
        }
        let mut h = if dnf <= 1e-10 || dny <= 1e-10 { 1e-6 } else { 0.01 * (dny / dnf).sqrt() };
        h = h.min(self.cfg.max_step);
        let y1 = combo(&self.y, h, &[(1.0, &self.k1)]);
        let k2 = self.f(&y1);
        let mut der2 = 0.0;
        for i in 0..self.n {
            let sk = self.sk(self.y[i], self.y[i]);
            der2 += ((k2[i] - self.k1[i]) / sk).powi(2);
        }
        let der2 = der2.sqrt() / h;
        let der12 = der2.max(dnf.sqrt());
        let h1 = if der12 <= 1e-15 {
            (h * 1e-3).max(1e-6)
        } else {
            (0.01 / der12).powf(1.0 / 8.0)
        };
        (100.0 * h).min(h1).min(self.cfg.max_step)
    }

    /// Advance by one accepted step, not beyond `tau_end`.
    fn step(&mut self, tau_end: f64) -> Result<DenseStep> {
        const SAFE: f64 = 0.9;
        const FACC1: f64 = 1.0 / 0.333;
        const FACC2: f64 = 1.0 / 6.0;
        loop {
            let remaining = tau_end - self.tau;
            let mut h = self.h.min(self.cfg.max_step);
            if h >= remaining || remaining - h < 1e-12 * h {
                h = remaining;
            }
            if h <= 1e-14 * self.tau.abs().max(1.0) {
                return Err(Error::StepUnderflow { t: self.sign * self.tau, h });
            }
            let y = self.y;
            let k1 = self.k1;
            let k2 = self.f(&combo(&y, h, &[(A21, &k1)]));
            let k3 = self.f(&combo(&y, h, &[(A31, &k1), (A32, &k2)]));
            let k4 = self.f(&combo(&y, h, &[(A41, &k1), (A43, &k3)]));
            let k5 = self.f(&combo(&y, h, &[(A51, &k1), (A53, &k3), (A54, &k4)]));
            let k6 = self.f(&combo(&y, h, &[(A61, &k1), (A64, &k4), (A65, &k5)]));
            let k7 = self.f(&combo(&y, h, &[(A71, &k1), (A74, &k4), (A75, &k5), (A76, &k6)]));
            let k8 = self.f(&combo(
                &y,
                h,
                &[(A81, &k1), (A84, &k4), (A85, &k5), (A86, &k6), (A87, &k7)],
            ));
            let k9 = self.f(&combo(
                &y,
                h,
                &[(A91, &k1), (A94, &k4), (A95, &k5), (A96, &k6), (A97, &k7), (A98, &k8)],
            ));
            let k10 = self.f(&combo(
                &y,
                h,
                &[
                    (A101, &k1),
                    (A104, &k4),
                    (A105, &k5),
                    (A106, &k6),
                    (A107, &k7),
                    (A108, &k8),
                    (A109, &k9),
                ],
            ));
            let k11 = self.f(&combo(
                &y,
                h,
                &[
                    (A111, &k1),
                    (A114, &k4),
                    (A115, &k5),
                    (A116, &k6),
                    (A117, &k7),
                    (A118, &k8),
                    (A119, &k9),
                    (A1110, &k10),
                ],
            ));
            let yy1 = combo(
                &y,
                h,
                &[
                    (A121, &k1),
                    (A124, &k4),
                    (A125, &k5),
                    (A126, &k6),
                    (A127, &k7),
                    (A128, &k8),
                    (A129, &k9),
                    (A1210, &k10),
                    (A1211, &k11),
                ],
            );
            let k12 = self.f(&yy1);
            let mut kb = [0.0; 6];
            for i in 0..6 {
                kb[i] = B1 * k1[i]
                    + B6 * k6[i]
                    + B7 * k7[i]
                    + B8 * k8[i]
                    + B9 * k9[i]
                    + B10 * k10[i]
                    + B11 * k11[i]
                    + B12 * k12[i];
            }
            let y_new = combo(&y, h, &[(1.0, &kb)]);

            let (mut err, mut err2) = (0.0, 0.0);
            for i in 0..self.n {
                let sk = self.sk(y[i], y_new[i]);
                let e2 = kb[i] - BHH1 * k1[i] - BHH2 * k9[i] - BHH3 * k12[i];
                err2 += (e2 / sk).powi(2);
                let e = ER1 * k1[i]
                    + ER6 * k6[i]
                    + ER7 * k7[i]
                    + ER8 * k8[i]
                    + ER9 * k9[i]
                    + ER10 * k10[i]
                    + ER11 * k11[i]
                    + ER12 * k12[i];
                err += (e / sk).powi(2);
            }
            let mut deno = err + 0.01 * err2;
            if deno <= 0.0 {
                deno = 1.0;
            }
            let err = h * err * (1.0 / (deno * self.n as f64)).sqrt();
            let fac11 = err.powf(1.0 / 8.0);
            let fac = FACC2.max(FACC1.min(fac11 / SAFE));
            let mut h_new = h / fac;

            if !err.is_finite() {
                self.h = h / FACC1;
                self.rejected = true;
                continue;
            }
            if err > 1.0 {
                self.h = h / FACC1.min(fac11 / SAFE);
                self.rejected = true;
                continue;
            }

            self.facold = err.max(1e-4);
            let k_new = self.f(&y_new);

            // dense output
            let mut cont = [[0.0; 6]; 8];
            for i in 0..6 {
                let ydiff = y_new[i] - y[i];
                let bspl = h * k1[i] - ydiff;
                cont[0][i] = y[i];
                cont[1][i] = ydiff;
                cont[2][i] = bspl;
                cont[3][i] = ydiff - h * k_new[i] - bspl;
                cont[4][i] = D41 * k1[i]
                    + D46 * k6[i]
                    + D47 * k7[i]
                    + D48 * k8[i]
                    + D49 * k9[i]
                    + D410 * k10[i]
                    + D411 * k11[i]
                    + D412 * k12[i];
                cont[5][i] = D51 * k1[i]
                    + D56 * k6[i]
                    + D57 * k7[i]
                    + D58 * k8[i]
                    + D59 * k9[i]
                    + D510 * k10[i]
                    + D511 * k11[i]
                    + D512 * k12[i];
                cont[6][i] = D61 * k1[i]
                    + D66 * k6[i]
                    + D67 * k7[i]
                    + D68 * k8[i]
                    + D69 * k9[i]
                    + D610 * k10[i]
                    + D611 * k11[i]
                    + D612 * k12[i];
                cont[7][i] = D71 * k1[i]
                    + D76 * k6[i]
                    + D77 * k7[i]
                    + D78 * k8[i]
                    + D79 * k9[i]
                    + D710 * k10[i]
                    + D711 * k11[i]
                    + D712 * k12[i];
            }
            let k14 = self.f(&combo(
                &y,
                h,
                &[
                    (A141, &k1),
                    (A147, &k7),
                    (A148, &k8),
                    (A149, &k9),
                    (A1410, &k10),
                    (A1411, &k11),
                    (A1412, &k12),
                    (A1413, &k_new),
                ],
            ));
            let k15 = self.f(&combo(
                &y,
                h,
                &[
                    (A151, &k1),
                    (A156, &k6),
                    (A157, &k7),
                    (A158, &k8),
                    (A1511, &k11),
                    (A1512, &k12),
                    (A1513, &k_new),
                    (A1514, &k14),
                ],
            ));
            let k16 = self.f(&combo(
                &y,
                h,
                &[
                    (A161, &k1),
                    (A166, &k6),
                    (A167, &k7),
                    (A168, &k8),
                    (A169, &k9),
                    (A1613, &k_new),
                    (A1614, &k14),
                    (A1615, &k15),
                ],
            ));
            for i in 0..6 {
                cont[4][i] =
                    h * (cont[4][i] + D413 * k_new[i] + D414 * k14[i] + D415 * k15[i] + D416 * k16[i]);
                cont[5][i] =
                    h * (cont[5][i] + D513 * k_new[i] + D514 * k14[i] + D515 * k15[i] + D516 * k16[i]);
                cont[6][i] =
                    h * (cont[6][i] + D613 * k_new[i] + D614 * k14[i] + D615 * k15[i] + D616 * k16[i]);
                cont[7][i] =
                    h * (cont[7][i] + D713 * k_new[i] + D714 * k14[i] + D715 * k15[i] + D716 * k16[i]);
            }

            let mut y_proj = y_new;
            self.sys.project(&mut y_proj);
            let moved = y_proj != y_new;
            if moved {
                for i in 0..6 {
                    cont[1][i] += y_proj[i] - y_new[i];
                }
            }
            let step = DenseStep { tau0: self.tau, h, cont };

            if self.rejected {
                h_new = h_new.min(h);
                self.rejected = false;
            }
            self.tau += h;
            self.y = y_proj;
            self.k1 = if moved { self.f(&y_proj) } else { k_new };
            self.h = h_new.min(self.cfg.max_step);
            self.record_drift()?;
            return Ok(step);
        }
    }

    fn record_drift(&mut self) -> Result<()> {
        let dh = (self.sys.h_raw(&self.y) - self.drift.h0).abs();
        let dj = (self.sys.j_raw(&self.y) - self.drift.j0).abs();
        self.drift.max_dh = self.drift.max_dh.max(dh);
        self.drift.max_dj = self.drift.max_dj.max(dj);
        self.drift.max_constraint = self.drift.max_constraint.max(self.sys.constraint_residual(&self.y));
        let worst = dh.max(dj).max(self.drift.max_constraint);
        // invariants are quadratic, so rounding grows with |y|^2 on unbounded orbits
        let size = 1.0 + self.drift.h0.abs() + self.drift.j0.abs() + self.y.iter().map(|c| c * c).sum::<f64>();
        self.drift_limit = self.drift_limit.max(self.drift_tol * size);
        if worst > self.drift_limit {
            return Err(Error::DriftExceeded {
                drift: worst,
                limit: self.drift_limit,
                t: self.sign * self.tau,
            });
        }
        Ok(())
    }
}

/// A densely sampled integral curve of `X_H` or `X_J`, `t` in `[0, t_end]`
/// (or `[t_end, 0]` for backward segments).
#[derive(Debug, Clone)]
pub struct OrbitSegment {
    pub system: IntegrableSystem,
    pub field: FieldId,
    /// +1 for forward time, -1 for backward.
    pub direction: f64,
    pub start: PhasePoint,
    steps: Vec<DenseStep>,
    tau_end: f64,
    pub drift: Drift,
}

impl OrbitSegment {
    pub fn t_end(&self) -> f64 {
        self.direction * self.tau_end
    }

    pub fn duration(&self) -> f64 {
        self.tau_end
    }

    pub fn steps(&self) -> &[DenseStep] {
        &self.steps
    }

    fn locate(&self, tau: f64) -> &DenseStep {
        let idx = self.steps.partition_point(|s| s.tau1() < tau);
        &self.steps[idx.min(self.steps.len() - 1)]
    }

    fn eval_tau(&self, tau: f64) -> Vec6 {
        if self.steps.is_empty() {
            return self.start.coords;
        }
        self.locate(tau).eval(tau)
    }

    /// Interpolated state at real time `t`.
    pub fn eval(&self, t: f64) -> PhasePoint {
        PhasePoint::from_vec(self.system.kind, self.eval_tau(t * self.direction))
    }

    pub fn end_point(&self) -> PhasePoint {
        self.eval(self.t_end())
    }

    /// Real-time step boundaries, from the start to the end of the segment.
    pub fn node_times(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.steps.len() + 1);
        v.push(0.0);
        for s in &self.steps {
            v.push(self.direction * s.tau1().min(self.tau_end));
        }
        if let Some(last) = v.last_mut() {
            *last = self.t_end();
        }
        v
    }

    /// Time-ordered node states `(t, p)`.
    pub fn states(&self) -> Vec<(f64, PhasePoint)> {
        self.node_times().into_iter().map(|t| (t, self.eval(t))).collect()
    }

    /// Velocity of the segment at time `t` (the vector field at the interpolated state).
    pub fn velocity(&self, t: f64) -> Vec6 {
        self.system.field_raw(self.field, &self.eval_tau(t * self.direction))
    }

    /// Local minima of `f` along the segment, refined on the dense output.
    /// Returns `(t, f_min)` pairs in time order.
    pub fn local_minima(&self, f: &dyn Fn(&Vec6) -> f64, per_step: usize) -> Vec<(f64, f64)> {
        let per_step = per_step.max(2);
        let mut taus = vec![0.0];
        for s in &self.steps {
            let end = s.tau1().min(self.tau_end);
            for k in 1..=per_step {
                taus.push(s.tau0 + (end - s.tau0) * k as f64 / per_step as f64);
            }
        }
        let vals: Vec<f64> = taus.iter().map(|&t| f(&self.eval_tau(t))).collect();
        let mut out = Vec::new();
        for i in 1..vals.len().saturating_sub(1) {
            if vals[i] <= vals[i - 1] && vals[i] < vals[i + 1] {
                let (tau, v) = golden_min(|t| f(&self.eval_tau(t)), taus[i - 1], taus[i + 1]);
                out.push((self.direction * tau, v));
            }
        }
        out
    }
}

fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let g = 0.5 * (5.0_f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-14 * (1.0 + a.abs()) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    let t = 0.5 * (a + b);
    (t, f(t))
}

/// Integrate `field` from `p0` over `[0, t_end]` (`t_end < 0` runs backward).
pub fn integrate(
    sys: &IntegrableSystem,
    field: FieldId,
    p0: &PhasePoint,
    t_end: f64,
    cfg: &IntegratorConfig,
) -> Result<OrbitSegment> {
    if !t_end.is_finite() {
        return Err(Error::InvalidParameter("t_end must be finite".into()));
    }
    let sign = if t_end < 0.0 { -1.0 } else { 1.0 };
    let tau_end = t_end.abs();
    let mut st = Stepper::new(sys, field, sign, p0, cfg)?;
    let mut steps = Vec::new();
    while st.tau < tau_end {
        steps.push(st.step(tau_end)?);
    }
    Ok(OrbitSegment {
        system: *sys,
        field,
        direction: sign,
        start: *p0,
        steps,
        tau_end,
        drift: st.drift,
    })
}

/// State reached from `p0` after time `t` along `field`.
pub fn flow_to(
    sys: &IntegrableSystem,
    field: FieldId,
    p0: &PhasePoint,
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<PhasePoint> {
    if t == 0.0 {
        return Ok(*p0);
    }
    Ok(integrate(sys, field, p0, t, cfg)?.end_point())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Rising,
    Falling,
    Any,
}

impl Direction {
    fn admits(self, rising: bool) -> bool {
        match self {
            Direction::Rising => rising,
            Direction::Falling => !rising,
            Direction::Any => true,
        }
    }
}

pub type ScalarFn<'a> = Box<dyn Fn(&Vec6) -> f64 + Send + Sync + 'a>;
pub type ConfirmFn<'a> = Box<dyn Fn(&Vec6) -> bool + Send + Sync + 'a>;

pub enum EventKind<'a> {
    /// Zero of a scalar function; a zero at `t = 0` counts as an occurrence.
    ScalarRoot(ScalarFn<'a>),
    /// Local minimum of a scalar function (e.g. a squared distance).
    ProximityMinimum(ScalarFn<'a>),
}

pub struct EventSpec<'a> {
    pub kind: EventKind<'a>,
    pub direction: Direction,
    /// Which admitted occurrence to stop at (1-based).
    pub count: usize,
    /// Occurrences failing the confirmation are not counted.
    pub confirm: Option<ConfirmFn<'a>>,
}

impl<'a> EventSpec<'a> {
    pub fn root(f: impl Fn(&Vec6) -> f64 + Send + Sync + 'a, direction: Direction, count: usize) -> Self {
        Self { kind: EventKind::ScalarRoot(Box::new(f)), direction, count, confirm: None }
    }

    pub fn proximity_min(f: impl Fn(&Vec6) -> f64 + Send + Sync + 'a, count: usize) -> Self {
        Self {
            kind: EventKind::ProximityMinimum(Box::new(f)),
            direction: Direction::Any,
            count,
            confirm: None,
        }
    }

    pub fn with_confirm(mut self, c: impl Fn(&Vec6) -> bool + Send + Sync + 'a) -> Self {
        self.confirm = Some(Box::new(c));
        self
    }
}

const ESCAPE_NORM: f64 = 1e8;
const EVENT_SUBSAMPLES: usize = 4;

/// Integrate forward until the event fires.
pub fn integrate_until(
    sys: &IntegrableSystem,
    field: FieldId,
    p0: &PhasePoint,
    event: &EventSpec<'_>,
    cfg: &IntegratorConfig,
) -> Result<(OrbitSegment, f64)> {
    integrate_until_signed(sys, field, 1.0, p0, event, cfg)
}

/// As [`integrate_until`], with `sign = -1` running the flow backward in time.
/// The returned event time is the real (signed) time.
pub fn integrate_until_signed(
    sys: &IntegrableSystem,
    field: FieldId,
    sign: f64,
    p0: &PhasePoint,
    event: &EventSpec<'_>,
    cfg: &IntegratorConfig,
) -> Result<(OrbitSegment, f64)> {
    let sign = if sign < 0.0 { -1.0 } else { 1.0 };
    let max_time = cfg.max_time_for(sys);
    let mut st = Stepper::new(sys, field, sign, p0, cfg)?;
    let mut steps: Vec<DenseStep> = Vec::new();
    let confirmed = |y: &Vec6| event.confirm.as_ref().is_none_or(|c| c(y));
    let mut seen = 0usize;

    match &event.kind {
        EventKind::ScalarRoot(g) => {
            let mut ga = g(&p0.coords);
            let mut at_zero_start = ga.abs() <= cfg.event_refine_tol;
            let mut ta = 0.0;
            loop {
                if st.tau >= max_time {
                    return Err(Error::EventNotFound { reason: EventFailure::TimeBudget, t: sign * st.tau });
                }
                let step = st.step(max_time)?;
                for k in 1..=EVENT_SUBSAMPLES {
                    let tb = step.tau0 + step.h * k as f64 / EVENT_SUBSAMPLES as f64;
                    let yb = if k == EVENT_SUBSAMPLES { st.y } else { step.eval(tb) };
                    let gb = g(&yb);
                    if at_zero_start {
                        // occurrence at t = 0, oriented by the departure direction
                        at_zero_start = false;
                        if gb != 0.0 && event.direction.admits(gb > 0.0) && confirmed(&p0.coords) {
                            seen += 1;
                            if seen == event.count {
                                let seg = finish(sys, field, sign, p0, Vec::new(), 0.0, st.drift);
                                return Ok((seg, 0.0));
                            }
                        }
                    } else if ga != 0.0 && (gb == 0.0 || ga * gb < 0.0) && event.direction.admits(gb > ga) {
                        let root = if gb == 0.0 {
                            tb
                        } else {
                            let mut conv = roots::SimpleConvergency { eps: cfg.event_refine_tol, max_iter: 200 };
                            roots::find_root_brent(ta, tb, |t| g(&step.eval(t)), &mut conv).unwrap_or(0.5 * (ta + tb))
                        };
                        let yr = step.eval(root);
                        if confirmed(&yr) {
                            seen += 1;
                            if seen == event.count {
                                steps.push(step);
                                let seg = finish(sys, field, sign, p0, steps, root, st.drift);
                                return Ok((seg, sign * root));
                            }
                        }
                    }
                    ga = gb;
                    ta = tb;
                }
                if st.y.iter().any(|c| !c.is_finite() || c.abs() > ESCAPE_NORM) {
                    return Err(Error::EventNotFound { reason: EventFailure::Escaped, t: sign * st.tau });
                }
                steps.push(step);
            }
        }
        EventKind::ProximityMinimum(d) => {
            // sliding window of the last three samples
            let mut w: [(f64, f64); 3] = [(0.0, d(&p0.coords)); 3];
            let mut filled = 1usize;
            loop {
                if st.tau >= max_time {
                    return Err(Error::EventNotFound { reason: EventFailure::TimeBudget, t: sign * st.tau });
                }
                let step = st.step(max_time)?;
                steps.push(step);
                let step = steps.last().unwrap().clone();
                for k in 1..=EVENT_SUBSAMPLES {
                    let tb = step.tau0 + step.h * k as f64 / EVENT_SUBSAMPLES as f64;
                    let db = d(&step.eval(tb));
                    w = [w[1], w[2], (tb, db)];
                    filled += 1;
                    if filled >= 3 && w[1].1 <= w[0].1 && w[1].1 < w[2].1 {
                        let seg_tmp = finish(sys, field, sign, p0, steps.clone(), st.tau, st.drift);
                        let (tm, _) = golden_min(|t| d(&seg_tmp.eval_tau(t)), w[0].0, w[2].0);
                        let ym = seg_tmp.eval_tau(tm);
                        if confirmed(&ym) {
                            seen += 1;
                            if seen == event.count {
                                let keep = seg_tmp.steps.partition_point(|s| s.tau1() < tm) + 1;
                                let mut steps = seg_tmp.steps;
                                steps.truncate(keep.min(steps.len()));
                                let seg = finish(sys, field, sign, p0, steps, tm, st.drift);
                                return Ok((seg, sign * tm));
                            }
                        }
                    }
                }
                if st.y.iter().any(|c| !c.is_finite() || c.abs() > ESCAPE_NORM) {
                    return Err(Error::EventNotFound { reason: EventFailure::Escaped, t: sign * st.tau });
                }
            }
        }
    }
}

fn finish(
    sys: &IntegrableSystem,
    field: FieldId,
    sign: f64,
    p0: &PhasePoint,
    steps: Vec<DenseStep>,
    tau_end: f64,
    drift: Drift,
) -> OrbitSegment {
    OrbitSegment { system: *sys, field, direction: sign, start: *p0, steps, tau_end, drift }
}
