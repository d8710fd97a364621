"""
Online portfolio engine - Solara dashboard

Features:
- Hyper-parameter controls (memory, shrinkage, risk tolerance, active model)
- Synthetic market controls (size, planted payoff, innovations, seed)
- Side-by-side backtest of the algorithm and its benchmarks
- Cumulative performance and leg attribution plots
- Statistics table

Run with: solara run online_portfolio/visualization/app.py
"""

import matplotlib.pyplot as plt
import numpy as np
import solara

from online_portfolio.model.active_models import ACTIVE_MODELS, STRATEGY_LABELS
from online_portfolio.model.backtest import performance_stats, run_strategies
from online_portfolio.model.hyperparams import HyperParams
from online_portfolio.model.synth import INNOVATIONS, GeneratorSpec, generate
from online_portfolio.visualization.plots import plot_performance


# ============================================================================
# REACTIVE STATE MANAGEMENT
# ============================================================================

hyperparams = solara.reactive({
    'lambda_s': 0.99,
    'lambda_a': 0.95,
    'kappa_s': 0.5,
    'kappa_a': 0.5,
    'gamma_s': 50.0,
    'gamma_a': 50.0,
})
active_model = solara.reactive('full')
max_leverage = solara.reactive(2.0)
burn_in = solara.reactive(52)

# Synthetic market
n_assets = solara.reactive(50)
n_periods = solara.reactive(500)
planted_payoff = solara.reactive(0.004)
innovations = solara.reactive('gaussian')
random_seed = solara.reactive(42)

# Run state
results = solara.reactive(None)
run_message = solara.reactive("")

SLIDERS = {
    'lambda_s': ("Strategic memory (λ_s)", 0.90, 0.999, 0.001),
    'lambda_a': ("Active memory (λ_a)", 0.70, 0.99, 0.01),
    'kappa_s': ("Strategic shrinkage (κ_s)", 0.0, 1.0, 0.05),
    'kappa_a': ("Active shrinkage (κ_a)", 0.0, 1.0, 0.05),
    'gamma_s': ("Systematic risk tolerance (γ_s)", 1.0, 200.0, 1.0),
    'gamma_a': ("Active risk tolerance (γ_a)", 1.0, 400.0, 1.0),
}


# ============================================================================
# MAIN PAGE COMPONENT
# ============================================================================

@solara.component
def Page():
    solara.Title("Online Portfolio Engine")

    with solara.Column(style={"padding": "20px", "max-width": "1400px", "margin": "0 auto"}):
        with solara.Card(style={"background": "#f0f4f8", "margin-bottom": "20px"}):
            solara.Markdown("""
# Online Portfolio Engine
Adaptive factor and characteristic forecasts, blended and decomposed into
GMV, systematic and active legs under a gross leverage bound.
            """)

        with solara.Columns([2, 3]):
            with solara.Column():
                HyperParamControls()
                MarketControls()
                RunControls()
            with solara.Column():
                if results.value is not None:
                    PerformancePlot()
                    StatisticsTable()


# ============================================================================
# CONTROL COMPONENTS
# ============================================================================

@solara.component
def HyperParamControls():
    with solara.Card("Hyper-parameters", style={"margin-bottom": "15px"}):
        with solara.Column():
            for key, (label, lo, hi, step) in SLIDERS.items():
                solara.SliderFloat(
                    label=label,
                    value=hyperparams.value[key],
                    min=lo,
                    max=hi,
                    step=step,
                    on_value=lambda v, name=key: hyperparams.set({**hyperparams.value, name: v}),
                )
            solara.Markdown("**Active model**")
            solara.ToggleButtonsSingle(value=active_model.value, values=list(ACTIVE_MODELS), on_value=active_model.set)
            solara.Markdown(f"*{ACTIVE_MODELS[active_model.value]['description']}*")
            solara.SliderFloat(label="Gross leverage (L)", value=max_leverage.value, min=1.0, max=5.0, step=0.1,
                               on_value=max_leverage.set)
            solara.SliderInt(label="Burn-in (periods)", value=burn_in.value, min=10, max=104, on_value=burn_in.set)


@solara.component
def MarketControls():
    with solara.Card("Synthetic market", style={"margin-bottom": "15px"}):
        with solara.Column():
            solara.SliderInt(label="Assets", value=n_assets.value, min=10, max=200, step=10, on_value=n_assets.set)
            solara.SliderInt(label="Periods", value=n_periods.value, min=200, max=1200, step=50, on_value=n_periods.set)
            solara.SliderFloat(label="Planted BVTP payoff", value=planted_payoff.value, min=0.0, max=0.01,
                               step=0.0005, on_value=planted_payoff.set)
            solara.ToggleButtonsSingle(value=innovations.value, values=list(INNOVATIONS), on_value=innovations.set)
            solara.InputInt(label="Seed", value=random_seed.value, on_value=random_seed.set)


@solara.component
def RunControls():
    with solara.Card("Run", style={"margin-bottom": "15px"}):
        with solara.Row():
            solara.Button("Run backtest", on_click=run_backtest, color="primary", outlined=True)
            if results.value is not None:
                solara.Button("Reset", on_click=reset, color="error", outlined=True)
        if run_message.value:
            solara.Info(run_message.value)


# ============================================================================
# VISUALIZATION COMPONENTS
# ============================================================================

@solara.component
def PerformancePlot():
    with solara.Card("Cumulative performance", style={"margin-bottom": "15px"}):
        fig = plot_performance(results.value)
        solara.FigureMatplotlib(fig)
        plt.close(fig)


@solara.component
def StatisticsTable():
    with solara.Card("Statistics", style={"margin-bottom": "15px"}):
        lines = [
            "| Strategy | SR (weekly) | Ann. return | Ann. vol | Max DD | Turnover |",
            "|----------|-------------|-------------|----------|--------|----------|",
        ]
        for name, res in results.value.items():
            stats = performance_stats(res)
            lines.append(
                f"| **{STRATEGY_LABELS.get(name, name)}** | {stats.sr:.4f} | {stats.ann_return:.1%} | "
                f"{stats.ann_vol:.1%} | {stats.max_drawdown:.1%} | {stats.mean_turnover:.3f} |"
            )
        solara.Markdown("\n".join(lines))
        warnings = sum(len(res.warnings) for res in results.value.values())
        if warnings:
            solara.Warning(f"{warnings} degraded period(s) recorded")


# ============================================================================
# HELPER FUNCTIONS
# ============================================================================

def run_backtest():
    try:
        hp = HyperParams(
            **hyperparams.value,
            active_model=active_model.value,
            max_leverage=max_leverage.value,
            burn_in=burn_in.value,
            universe_size=n_assets.value,
        )
        spec = GeneratorSpec(
            n_assets=n_assets.value,
            n_periods=n_periods.value,
            planted_payoffs=np.array([0.0, planted_payoff.value, 0.0]),
            innovations=innovations.value,
            seed=random_seed.value,
        )
        panel, factors, _ = generate(spec)
        model = run_strategies(panel, factors, hp)
        results.set(model.results())
        run_message.set(f"Configuration {hp.digest()} over {panel.T} periods")
    except (ValueError, ArithmeticError) as exc:
        run_message.set(f"Error: {exc}")


def reset():
    results.set(None)
    run_message.set("")
