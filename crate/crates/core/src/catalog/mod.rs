//! Ready-made application models with their metadata: closed forms,
//! ground-truth learning processes, deadline provenance and payoff shifts.

pub mod deadline;
pub mod finance;
pub mod learning;

pub use deadline::{apply_deadline, check_news, predicted_trend, BandTrend, DeadlineSpec, News, NewsCheck};
pub use finance::{
    leland_kappa_as_printed, make_investment, make_leland, make_leland_direct, make_put, InvestmentParams,
    LelandParams, Oracle, PutParams,
};
pub use learning::{make_nonbinary, make_wald, FiniteSupportPrior, LearningModel, NonbinaryParams, WaldParams};

use crate::error::{Error, Result};
use crate::field::CoefficientField;
use crate::grid::GridSpec;
use crate::problem::{Action, Coefficients, Domain, Horizon, StoppingPayoff, StoppingProblem};

/// Deadline provenance: the untransformed problem and the deadline.
#[derive(Debug, Clone)]
pub struct DeadlineInfo {
    pub base: StoppingProblem,
    pub spec: DeadlineSpec,
}

#[derive(Debug, Clone)]
pub struct CatalogModel {
    pub name: String,
    pub description: String,
    pub problem: StoppingProblem,
    pub learning: Option<LearningModel>,
    pub deadline: Option<DeadlineInfo>,
    pub oracle: Option<Oracle>,
    /// Constant added to the solved value to recover the model's value.
    pub shift: f64,
}

impl CatalogModel {
    fn plain(name: &str, description: &str, problem: StoppingProblem) -> Self {
        Self {
            name: name.into(),
            description: description.into(),
            problem: StoppingProblem { name: name.into(), ..problem },
            learning: None,
            deadline: None,
            oracle: None,
            shift: 0.0,
        }
    }
}

type Builder = fn() -> Result<CatalogModel>;

const ENTRIES: &[(&str, &str, Builder)] = &[
    ("put_stationary", "perpetual American put, K=1, r=0.05, sigma=0.3", put_stationary),
    ("put_falling_vol", "perpetual put with sigma(t)=0.3(1-0.05t) on [0,10]", put_falling_vol),
    ("investment_stationary", "irreversible investment, mu=0.03, sigma=0.2, r=0.06, I=1", investment_stationary),
    ("investment_golden", "irreversible investment, mu=0, sigma=0.2, r=0.02, I=1", investment_golden),
    ("investment_falling_cost", "investment with cost I(t)=1-0.02t on [0,10]", investment_falling_cost),
    ("wald_stationary", "binary Wald, i=zeta=1, c=0.02, r=0.1, a=b=1", wald_stationary),
    ("wald_rising_cost", "binary Wald with cost c(t)=0.01+0.02t", wald_rising_cost),
    ("wald_rising_intensity", "binary Wald with intensity i(t)=1+t", wald_rising_intensity),
    ("nonbinary_three_point", "learning with prior {-1,0.1,1} weights (0.4,0.2,0.4)", nonbinary_three_point),
    ("deadline_forced", "Wald with forced decision at rate 0.5+0.1t", deadline_forced),
    ("deadline_revelation", "Wald with full revelation at rate 0.5-0.02t", deadline_revelation),
    ("leland_stationary", "endogenous default, delta=0.06, c=0.03, mu=0.01, sigma=0.25, r=0.05, G=0", leland_stationary),
    ("leland_penalty", "endogenous default with default payoff G=-0.1", leland_penalty),
    ("wald_intensity_menu", "Wald choosing intensity in {0.5,1} at cost 0.05 i^2", wald_intensity_menu),
    ("wald_intensity_menu_rising_cost", "intensity menu with cost c(t)=0.01+0.02t", wald_intensity_menu_rising_cost),
    ("wald_intensity_menu_falling_noise", "intensity menu with noise zeta(t)=1/(1+0.2t)", wald_intensity_menu_falling_noise),
    ("two_hump", "zero payoff with a two-humped flow; continuation region has a hole", two_hump),
];

pub fn names() -> Vec<&'static str> {
    ENTRIES.iter().map(|e| e.0).collect()
}

pub fn describe(name: &str) -> Option<&'static str> {
    ENTRIES.iter().find(|e| e.0 == name).map(|e| e.1)
}

pub fn load(name: &str) -> Result<CatalogModel> {
    let entry = ENTRIES
        .iter()
        .find(|e| e.0 == name)
        .ok_or_else(|| Error::Config(format!("unknown catalog model `{name}` (see `catalog list`)")))?;
    let mut m = (entry.2)()?;
    m.name = name.into();
    m.description = entry.1.into();
    m.problem.name = name.into();
    Ok(m)
}

fn put_stationary() -> Result<CatalogModel> {
    let (p, oracle) = make_put(&PutParams::default())?;
    Ok(CatalogModel { oracle, ..CatalogModel::plain("", "", p) })
}

fn put_falling_vol() -> Result<CatalogModel> {
    let (p, _) = make_put(&PutParams {
        vol: CoefficientField::parse("0.3*(1 - 0.05*t)")?,
        horizon: Horizon::Perpetual { window: 10.0 },
        // With low volatility the value far out of the money drops below
        // the contact tolerance; keep the grid where it is resolvable.
        grid: GridSpec::log(200, 800, 0.05, 20.0),
        ..Default::default()
    })?;
    Ok(CatalogModel::plain("", "", p))
}

fn investment_stationary() -> Result<CatalogModel> {
    let (p, oracle) = make_investment(&InvestmentParams::default())?;
    Ok(CatalogModel { oracle, ..CatalogModel::plain("", "", p) })
}

fn investment_golden() -> Result<CatalogModel> {
    let (p, oracle) = make_investment(&InvestmentParams {
        mu: 0.0.into(),
        rate: 0.02.into(),
        ..Default::default()
    })?;
    Ok(CatalogModel { oracle, ..CatalogModel::plain("", "", p) })
}

fn investment_falling_cost() -> Result<CatalogModel> {
    let (p, _) = make_investment(&InvestmentParams {
        cost: CoefficientField::parse("1 - 0.02*t")?,
        horizon: Horizon::Perpetual { window: 10.0 },
        grid: GridSpec::log(200, 800, 0.01, 100.0),
        ..Default::default()
    })?;
    Ok(CatalogModel::plain("", "", p))
}

fn wald(params: WaldParams) -> Result<CatalogModel> {
    let (p, learning) = make_wald(&params)?;
    Ok(CatalogModel { learning: Some(learning), ..CatalogModel::plain("", "", p) })
}

fn wald_stationary() -> Result<CatalogModel> {
    wald(WaldParams::default())
}

fn wald_rising_cost() -> Result<CatalogModel> {
    wald(WaldParams { cost: CoefficientField::parse("0.01 + 0.02*t")?, ..Default::default() })
}

fn wald_rising_intensity() -> Result<CatalogModel> {
    wald(WaldParams { intensity: CoefficientField::parse("1 + t")?, ..Default::default() })
}

/// Default parameters of the three-point learning model.
pub fn nonbinary_params() -> Result<NonbinaryParams> {
    Ok(NonbinaryParams {
        prior: FiniteSupportPrior::new(vec![-1.0, 0.1, 1.0], vec![0.4, 0.2, 0.4], 1.0)?,
        a: 1.0,
        b: 1.0,
        rate: 0.1,
        cost: 0.02,
        window: 5.0,
        grid: GridSpec::uniform(200, 401),
    })
}

fn nonbinary_three_point() -> Result<CatalogModel> {
    let (p, learning) = make_nonbinary(&nonbinary_params()?)?;
    Ok(CatalogModel { learning: Some(learning), ..CatalogModel::plain("", "", p) })
}

fn with_deadline(spec: DeadlineSpec) -> Result<CatalogModel> {
    let (base, learning) = make_wald(&WaldParams {
        horizon: Horizon::Perpetual { window: 10.0 },
        ..Default::default()
    })?;
    let p = apply_deadline(&base, &spec)?;
    Ok(CatalogModel {
        learning: Some(learning),
        deadline: Some(DeadlineInfo { base, spec }),
        ..CatalogModel::plain("", "", p)
    })
}

fn deadline_forced() -> Result<CatalogModel> {
    with_deadline(DeadlineSpec {
        alpha: CoefficientField::parse("0.5 + 0.1*t")?,
        gamma: CoefficientField::parse("max(x, 1 - x)")?,
        news: News::Bad,
    })
}

fn deadline_revelation() -> Result<CatalogModel> {
    with_deadline(DeadlineSpec {
        alpha: CoefficientField::parse("0.5 - 0.02*t")?,
        gamma: CoefficientField::parse("x + (1 - x)")?,
        news: News::Good,
    })
}

fn leland(penalty: f64) -> Result<CatalogModel> {
    let (p, shift, oracle) = make_leland(&LelandParams { penalty, ..Default::default() })?;
    Ok(CatalogModel { oracle: Some(oracle), shift, ..CatalogModel::plain("", "", p) })
}

fn leland_stationary() -> Result<CatalogModel> {
    leland(0.0)
}

fn leland_penalty() -> Result<CatalogModel> {
    leland(-0.1)
}

/// Adds an intensity menu to a Wald problem: action `i` scales the belief
/// volatility by `i` and costs `kappa i²` per unit time.
pub fn intensity_menu(base: &StoppingProblem, menu: &[f64], kappa: f64) -> Result<StoppingProblem> {
    if menu.is_empty() || menu.iter().any(|&i| !(i > 0.0)) {
        return Err(Error::Model("intensity menu must be non-empty and positive".into()));
    }
    let c = &base.coefficients;
    let actions = menu
        .iter()
        .map(|&i| -> Result<Action> {
            let sigma = c.sigma.times(&i.into());
            let flow = c.flow.plus(&(-kappa * i * i).into());
            match (sigma, flow) {
                (Some(sigma), Some(flow)) => Ok(Action {
                    name: format!("i={i}"),
                    coefficients: Coefficients { sigma, flow, ..c.clone() },
                }),
                _ => Err(Error::Model("menu needs expression coefficients".into())),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let mut p = base.clone();
    p.actions = actions;
    Ok(p)
}

fn menu(params: WaldParams) -> Result<CatalogModel> {
    let (base, _) = make_wald(&params)?;
    let p = intensity_menu(&base, &[0.5, 1.0], 0.05)?;
    Ok(CatalogModel::plain("", "", p))
}

fn wald_intensity_menu() -> Result<CatalogModel> {
    menu(WaldParams::default())
}

fn wald_intensity_menu_rising_cost() -> Result<CatalogModel> {
    menu(WaldParams { cost: CoefficientField::parse("0.01 + 0.02*t")?, ..Default::default() })
}

fn wald_intensity_menu_falling_noise() -> Result<CatalogModel> {
    menu(WaldParams { noise: CoefficientField::parse("1/(1 + 0.2*t)")?, ..Default::default() })
}

fn two_hump() -> Result<CatalogModel> {
    let p = StoppingProblem {
        name: "two_hump".into(),
        domain: Domain::new(0.0, 1.0),
        horizon: Horizon::Perpetual { window: 1.0 },
        coefficients: Coefficients {
            mu: 0.0.into(),
            sigma: 0.05.into(),
            flow: CoefficientField::parse("exp(-((x - 0.25)/0.08)^2) + exp(-((x - 0.75)/0.08)^2) - 0.3")?,
            discount: 0.1.into(),
        },
        payoff: StoppingPayoff::new(0.0.into(), 0.0.into()).with_crossing(0.5),
        actions: Vec::new(),
        grid: GridSpec::uniform(0, 401),
        x0: Some(0.25),
        closure: Default::default(),
    };
    p.validate()?;
    Ok(CatalogModel::plain("", "", p))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_entry_builds_and_validates() {
        for name in names() {
            let m = load(name).unwrap_or_else(|e| panic!("{name}: {e}"));
            m.problem.validate().unwrap();
            assert_eq!(m.problem.name, name);
        }
        assert!(load("nope").is_err());
    }
}
