#pragma once

#include <stdexcept>
#include <string>

namespace incopt {

/** Base class of every error raised by the optimizer library. */
struct Error : std::runtime_error
{
    using std::runtime_error::runtime_error;
};

/** Malformed input file (bad JSON, wrong types, unknown keys). */
struct ParseError : Error { using Error::Error; };

/** Well-formed input that violates a catalog or query invariant. */
struct ValidationError : Error { using Error::Error; };

/** A statistics update names a relation or predicate the catalog does not declare. */
struct UnknownTarget : Error { using Error::Error; };

/** No physical alternative can deliver the requested property for an expression. */
struct NoAlternatives : Error { using Error::Error; };

/** The root group has no plan: disconnected join graph or unobtainable root property. */
struct InfeasibleQuery : Error { using Error::Error; };

/** Plan extraction requested while deltas are still pending. */
struct NotQuiescent : Error { using Error::Error; };

/** The exhaustive oracle refuses queries above its size limit. */
struct TooLarge : Error { using Error::Error; };

/** The fixpoint driver processed more deltas than its ceiling allows. */
struct NonTermination : Error { using Error::Error; };

}
