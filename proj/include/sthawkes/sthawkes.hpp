#pragma once

#include "sthawkes/bin_counts.hpp"
#include "sthawkes/data_pipeline.hpp"
#include "sthawkes/errors.hpp"
#include "sthawkes/estimator.hpp"
#include "sthawkes/hawkes_model.hpp"
#include "sthawkes/io.hpp"
#include "sthawkes/parallel.hpp"
#include "sthawkes/simulator.hpp"
#include "sthawkes/tensor3.hpp"
#include "sthawkes/tensor_algebra.hpp"
#include "sthawkes/theory.hpp"
