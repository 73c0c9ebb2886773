#pragma once

#include <cmath>
#include <vector>

namespace rirpinn {

// Shewchuk-style exact accumulator (the fsum algorithm). The running sum is
// kept as a list of non-overlapping partials whose exact sum equals the exact
// sum of everything added so far, so the rounded result is independent of
// insertion order. Used where pooled metric sums must match partition sums
// exactly.
class ExactSum {
public:
    void add(double x) {
        std::size_t i = 0;
        for (std::size_t j = 0; j < partials_.size(); ++j) {
            double y = partials_[j];
            if (std::fabs(x) < std::fabs(y)) std::swap(x, y);
            double hi = x + y;
            double lo = y - (hi - x);
            if (lo != 0.0) partials_[i++] = lo;
            x = hi;
        }
        partials_.resize(i);
        partials_.push_back(x);
    }

    void add(const ExactSum& other) {
        for (double p : other.partials_) add(p);
    }

    // Correctly rounded value of the exact sum.
    double value() const {
        double hi = 0.0;
        std::size_t n = partials_.size();
        if (n > 0) {
            double lo = 0.0;
            hi = partials_[--n];
            while (n > 0) {
                double x = hi;
                double y = partials_[--n];
                hi = x + y;
                lo = y - (hi - x);
                if (lo != 0.0) break;
            }
            // Round-half-even correction when the dropped tail straddles a tie.
            if (n > 0 && ((lo < 0.0 && partials_[n - 1] < 0.0) ||
                          (lo > 0.0 && partials_[n - 1] > 0.0))) {
                double y2 = lo * 2.0;
                double x2 = hi + y2;
                if (y2 == x2 - hi) hi = x2;
            }
        }
        return hi;
    }

    void reset() { partials_.clear(); }

private:
    std::vector<double> partials_;
};

}  // namespace rirpinn
